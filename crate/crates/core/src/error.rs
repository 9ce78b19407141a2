use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Stimulus geometry does not fit on the canvas.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Malformed NWF container (magic, version, manifest or blob layout).
    #[error("format error: {0}")]
    Format(String),
    #[error("node `{node}`: {message}")]
    Node { node: String, message: String },
    #[error("node `{node}`: unsupported op kind `{kind}`")]
    UnsupportedOp { node: String, kind: String },
    #[error("blob digest mismatch: manifest says {expected}, blob hashes to {actual}")]
    Digest { expected: String, actual: String },
    #[error("non-finite activation in tap `{0}`")]
    NonFinite(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn node(node: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Node {
            node: node.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (files, arguments, configs)
    /// as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::NonFinite(_))
    }
}
