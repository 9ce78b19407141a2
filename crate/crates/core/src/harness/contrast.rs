use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::PlotHint;
use super::{ExperimentKind, ExperimentReport};
use crate::engine::{default_taps, LayerTap, NetworkGraph};
use crate::error::{Error, Result};
use crate::metrics::{align_frequency_scale, contrast_response, iso_output_invert, log_linearity_r2, ContrastOptions};

pub const ISO_CONDITION: &str = "iso";
pub const LOG_LINEARITY_CONDITION: &str = "log-linearity-r2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastExperimentOptions {
    pub contrast: ContrastOptions,
    /// `None` uses the graph's default taps.
    pub taps: Option<Vec<LayerTap>>,
    /// Iso-output targets as fractions of each tap's largest response.
    pub iso_levels: Vec<f64>,
}

impl Default for ContrastExperimentOptions {
    fn default() -> Self {
        Self {
            contrast: ContrastOptions::default(),
            taps: None,
            iso_levels: vec![0.05, 0.2, 0.5],
        }
    }
}

/// Reads a `frequency,contrast` CSV of human iso-output (threshold) points.
pub fn load_human_curve(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(f64, f64)>().enumerate() {
        let (f, c) = rec.map_err(|e| Error::Dataset(format!("{} line {}: {e}", path.display(), i + 2)))?;
        if !(f > 0.0 && c > 0.0 && f.is_finite() && c.is_finite()) {
            return Err(Error::Dataset(format!(
                "{} line {}: frequency and contrast must be positive",
                path.display(),
                i + 2
            )));
        }
        out.push((f, c));
    }
    Ok(out)
}

/// Contrast response over the configured grid with iso-output curves,
/// log-linearity per tap and, given human points, frequency alignment of
/// every complete iso curve.
pub fn run_contrast_experiment(
    net: &NetworkGraph,
    model: &str,
    opts: &ContrastExperimentOptions,
    human: Option<&[(f64, f64)]>,
) -> Result<ExperimentReport> {
    let taps = opts.taps.clone().unwrap_or_else(|| default_taps(net));
    let opts = ContrastExperimentOptions {
        taps: Some(taps.clone()),
        ..opts.clone()
    };
    let hashed = serde_json::json!({ "options": opts, "human": human });
    let mut report = ExperimentReport::new(ExperimentKind::Contrast, model, opts.contrast.seed, &hashed)?;
    let table = contrast_response(net, &taps, &opts.contrast)?;
    let order = table.order.name();

    let mut tap_details = Vec::new();
    for (t, tap) in table.taps.iter().enumerate() {
        for (ci, &c) in table.contrasts.iter().enumerate() {
            for (fi, &f) in table.frequencies.iter().enumerate() {
                report.row("grating", tap, order, Some(c), Some(f), table.values[t][ci][fi]);
            }
        }
        let peak = table.values[t].iter().flatten().fold(0.0f64, |m, &v| m.max(v));
        let mut isos = Vec::new();
        for &level in &opts.iso_levels {
            let target = level * peak;
            if target <= 0.0 {
                continue;
            }
            let curve = iso_output_invert(&table, tap, target)?;
            for (f, c) in curve.frequencies.iter().zip(&curve.contrasts) {
                if let Some(c) = c {
                    report.row("grating", tap, ISO_CONDITION, Some(target), Some(*f), *c);
                }
            }
            let points: Vec<(f64, f64)> = curve
                .frequencies
                .iter()
                .zip(&curve.contrasts)
                .filter_map(|(f, c)| c.map(|c| (*f, c)))
                .collect();
            let alignment = match human {
                Some(h) if points.len() == curve.frequencies.len() => match align_frequency_scale(&points, h) {
                    Ok(a) => serde_json::to_value(a)?,
                    Err(e) => serde_json::json!({ "error": e.to_string() }),
                },
                Some(_) => serde_json::json!({ "error": "iso curve incomplete" }),
                None => serde_json::Value::Null,
            };
            isos.push(serde_json::json!({
                "level": level,
                "target": target,
                "reached": points.len(),
                "alignment": alignment,
            }));
        }
        let lin = log_linearity_r2(&table, tap)?;
        for (f, r2) in lin.frequencies.iter().zip(&lin.r2) {
            report.row("grating", tap, LOG_LINEARITY_CONDITION, None, Some(*f), *r2);
        }
        report.row("grating", tap, LOG_LINEARITY_CONDITION, None, None, lin.mean_r2);
        tap_details.push(serde_json::json!({
            "tap": tap,
            "peak": peak,
            "log_linearity": lin,
            "iso": isos,
        }));
    }
    report.details = serde_json::json!({
        "contrasts": table.contrasts,
        "frequencies": table.frequencies,
        "repetitions": table.repetitions,
        "taps": tap_details,
    });
    report.plots = vec![
        PlotHint::new(
            "line",
            "frequency",
            "value",
            &[&format!("condition={order}")],
            &["tap", "level_or_contrast"],
        ),
        PlotHint::new(
            "line",
            "frequency",
            "value",
            &["condition=iso"],
            &["tap", "level_or_contrast"],
        ),
    ];
    Ok(report)
}
