//! Perceptual correlates computed on tapped activations: perturbation
//! saliency, per-neuron mutual information under jitter and contrast
//! response with its derived curves.

mod context;
mod contrast;
mod mi;
pub mod oracles;
mod saliency;

use serde::{Deserialize, Serialize};

pub use context::{
    condition_mi, context_experiment, sample_seed, ContextOptions, ContextResult, Verdict, DEFAULT_MAX_NEURONS,
    TIE_TOLERANCE,
};
pub use contrast::{
    align_frequency_scale, contrast_response, iso_output_invert, log_linearity_r2, ContrastOptions,
    ContrastResponseTable, FrequencyAlignment, IsoCurve, LogLinearity,
};
pub use mi::{equal_amount_bins, mi_aggregate, mi_from_counts, mi_per_neuron, MiSample, DEFAULT_BINS};
pub use saliency::{default_levels_db, saliency_l1, SaliencyOptions, SaliencyResult};

/// Where the repetition average sits relative to the absolute value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricOrder {
    /// Mean over repetitions of `|a(perturbed) - a(reference)|`.
    #[default]
    MeanOfAbs,
    /// `|mean over repetitions of a(perturbed) - a(reference)|`.
    AbsOfMean,
}

impl MetricOrder {
    pub fn name(self) -> &'static str {
        match self {
            MetricOrder::MeanOfAbs => "mean-of-abs",
            MetricOrder::AbsOfMean => "abs-of-mean",
        }
    }
}

impl std::str::FromStr for MetricOrder {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mean-of-abs" => Ok(MetricOrder::MeanOfAbs),
            "abs-of-mean" => Ok(MetricOrder::AbsOfMean),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown metric order `{other}` (expected mean-of-abs or abs-of-mean)"
            ))),
        }
    }
}
