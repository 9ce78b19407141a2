use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::{load_network, save_network, NetworkGraph};
use crate::error::{Error, Result};
use crate::filterbank::{build_bank, BankParams, GaborParams, PyramidParams};

/// Environment variable naming the directory for cached built-in models.
pub const CACHE_ENV: &str = "PERCEPT_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Gabor,
    Steerable,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Gabor => "gabor",
            Builtin::Steerable => "steerable",
        }
    }

    pub fn params(self) -> BankParams {
        match self {
            Builtin::Gabor => BankParams::Gabor(GaborParams::default()),
            Builtin::Steerable => BankParams::Pyramid(PyramidParams::default()),
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gabor" => Ok(Builtin::Gabor),
            "steerable" | "pyramid" => Ok(Builtin::Steerable),
            other => Err(Error::InvalidArgument(format!(
                "unknown built-in model `{other}` (expected gabor or steerable)"
            ))),
        }
    }
}

/// `builtin:gabor`, `builtin:steerable` or a path to an NWF file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Builtin(Builtin),
    File(PathBuf),
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("builtin:") {
            Some(name) => Ok(ModelSpec::Builtin(name.parse()?)),
            None if s.is_empty() => Err(Error::InvalidArgument("empty model spec".into())),
            None => Ok(ModelSpec::File(PathBuf::from(s))),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Builtin(b) => write!(f, "builtin:{}", b.name()),
            ModelSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    /// Short identifier used in metric tables.
    pub id: String,
    pub net: NetworkGraph,
}

/// Resolves a model spec. Built-in banks are built for `size`x`size`
/// grayscale inputs and, when `cache` is given, stored there as NWF files
/// and reused on later calls.
pub fn load_model(spec: &ModelSpec, size: usize, cache: Option<&Path>) -> Result<LoadedModel> {
    match spec {
        ModelSpec::File(path) => {
            let net = load_network(path)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| net.name().to_string());
            Ok(LoadedModel { id, net })
        }
        ModelSpec::Builtin(b) => {
            if size == 0 {
                return Err(Error::InvalidArgument("model input size must be positive".into()));
            }
            let id = format!("{}-{size}", b.name());
            let build = || build_bank(&b.params(), size, size);
            let net = match cache {
                None => build()?,
                Some(dir) => {
                    let path = dir.join(format!("{id}.nwf"));
                    if path.is_file() {
                        load_network(&path)?
                    } else {
                        let net = build()?;
                        std::fs::create_dir_all(dir)?;
                        let tmp = dir.join(format!(".{id}.nwf.tmp"));
                        save_network(&net, &tmp)?;
                        std::fs::rename(&tmp, &path)?;
                        net
                    }
                }
            };
            Ok(LoadedModel { id, net })
        }
    }
}
