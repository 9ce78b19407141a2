//! Experiment orchestration: dataset ingestion, the saliency, context and
//! contrast experiments, and their CSV / JSON outputs.
//!
//! Every experiment returns an [`ExperimentReport`] whose [`MetricTable`]
//! is written as CSV next to a JSON sidecar holding the options, their
//! hash and the summary statistics. Reruns with the same seed, model and
//! options produce byte-identical files.

mod context;
mod contrast;
mod dataset;
mod model;
mod saliency;
mod table;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use context::{load_human_shapes, run_context_experiment, shape_summary, ConsistencyCounts, ShapeSummary};
pub use contrast::{load_human_curve, run_contrast_experiment, ContrastExperimentOptions};
pub use dataset::{
    fit_to_input, ingest_masking_dataset, MaskingDatasetManifest, MaskingRecord, PadMode, ScalePolicy,
    FULL_SET_RECORDS, THRESHOLD_FILE,
};
pub use model::{load_model, Builtin, LoadedModel, ModelSpec, CACHE_ENV};
pub use saliency::{evaluate_saliency_table, run_saliency_experiment, Residual, SaliencyExperimentOptions};
pub use table::{config_hash, sidecar_path, MetricRow, MetricTable, PlotHint, Sidecar, COLUMNS, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::stats::PredictionEval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Saliency,
    Context,
    Contrast,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Saliency => "saliency",
            ExperimentKind::Context => "context",
            ExperimentKind::Contrast => "contrast",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saliency" => Ok(ExperimentKind::Saliency),
            "context" => Ok(ExperimentKind::Context),
            "contrast" => Ok(ExperimentKind::Contrast),
            other => Err(Error::InvalidArgument(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEval {
    pub name: String,
    #[serde(flatten)]
    pub eval: PredictionEval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
    pub options: Value,
    pub table: MetricTable,
    pub evals: Vec<NamedEval>,
    pub consistency: Option<ConsistencyCounts>,
    pub residuals: Vec<Residual>,
    /// Inputs listed but not evaluated.
    pub skipped: Vec<String>,
    /// Experiment-specific results.
    pub details: Value,
    pub plots: Vec<PlotHint>,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind, model: &str, seed: u64, options: &impl Serialize) -> Result<Self> {
        let options = serde_json::to_value(options)?;
        let hash = config_hash(&serde_json::json!({
            "experiment": kind.name(),
            "model": model,
            "seed": seed,
            "options": options,
        }));
        Ok(Self {
            kind,
            model: model.to_string(),
            seed,
            config_hash: hash,
            options,
            table: MetricTable::default(),
            evals: Vec::new(),
            consistency: None,
            residuals: Vec::new(),
            skipped: Vec::new(),
            details: Value::Null,
            plots: Vec::new(),
        })
    }

    /// Appends a row stamped with this report's experiment, model and seed.
    fn row(
        &mut self,
        config_id: &str,
        tap: &str,
        condition: &str,
        level: Option<f64>,
        frequency: Option<f64>,
        value: f64,
    ) {
        self.table.push(MetricRow {
            experiment: self.kind.name().into(),
            model: self.model.clone(),
            config_id: config_id.into(),
            tap: tap.into(),
            condition: condition.into(),
            level_or_contrast: level,
            frequency,
            value,
            seed: self.seed,
        });
    }

    pub fn summary(&self) -> Value {
        serde_json::json!({
            "evals": self.evals,
            "consistency": self.consistency,
            "residuals": self.residuals,
            "skipped": self.skipped,
            "details": self.details,
        })
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            format_version: FORMAT_VERSION,
            experiment: self.kind.name().into(),
            model: self.model.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            options: self.options.clone(),
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows: self.table.len(),
            plots: self.plots.clone(),
            summary: self.summary(),
        }
    }

    /// Writes the table to `csv` and the sidecar next to it.
    pub fn write(&self, csv: &Path) -> Result<()> {
        if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.table.write_csv(csv)?;
        std::fs::write(sidecar_path(csv), self.sidecar().to_json_bytes()?)?;
        Ok(())
    }
}
