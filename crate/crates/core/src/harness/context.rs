use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::PlotHint;
use super::{ExperimentKind, ExperimentReport};
use crate::engine::{default_taps, NetworkGraph};
use crate::error::{Error, Result};
use crate::metrics::{context_experiment, ContextOptions, ContextResult, Verdict};
use crate::stats::srocc;
use crate::stimuli::{Paradigm, StimulusConfig};

pub const AGGREGATE_TAP: &str = "aggregate";
pub const DIFFERENCE_CONDITION: &str = "difference";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyCounts {
    pub consistent: usize,
    pub inconsistent: usize,
    pub tie: usize,
    pub total: usize,
}

impl ConsistencyCounts {
    pub fn tally<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Self {
        let mut c = Self::default();
        for v in verdicts {
            match v {
                Verdict::Consistent => c.consistent += 1,
                Verdict::Inconsistent => c.inconsistent += 1,
                Verdict::Tie => c.tie += 1,
            }
            c.total += 1;
        }
        c
    }
}

/// Per-shape mean aggregate MI: the easy shape over all configurations,
/// each hard layout over its own configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    /// `(shape, mean MI)` with shapes `easy`, `hard-0`, `hard-1`, ...
    pub shapes: Vec<(String, f64)>,
    /// Rank correlation against the supplied human values, over the
    /// shapes present in both.
    pub srocc: Option<f64>,
    pub matched: usize,
}

/// Reads a `shape,value` CSV.
pub fn load_human_shapes(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(String, f64)>().enumerate() {
        let rec = rec.map_err(|e| Error::Dataset(format!("{} line {}: {e}", path.display(), i + 2)))?;
        if !rec.1.is_finite() {
            return Err(Error::Dataset(format!(
                "{} line {}: value is not finite",
                path.display(),
                i + 2
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn shape_summary(results: &[(usize, &ContextResult)], human: Option<&[(String, f64)]>) -> Result<ShapeSummary> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mut shapes = vec![(
        "easy".to_string(),
        mean(&results.iter().map(|(_, r)| r.easy_aggregate).collect::<Vec<_>>()),
    )];
    let layouts = results.iter().map(|(l, _)| l + 1).max().unwrap_or(0);
    for l in 0..layouts {
        let v: Vec<f64> = results
            .iter()
            .filter(|(k, _)| *k == l)
            .map(|(_, r)| r.hard_aggregate)
            .collect();
        if !v.is_empty() {
            shapes.push((format!("hard-{l}"), mean(&v)));
        }
    }
    let (mut model, mut people) = (Vec::new(), Vec::new());
    if let Some(h) = human {
        for (name, v) in &shapes {
            if let Some((_, hv)) = h.iter().find(|(n, _)| n == name) {
                model.push(*v);
                people.push(*hv);
            }
        }
    }
    let rho = if model.len() >= 3 {
        srocc(&model, &people)?
    } else {
        None
    };
    Ok(ShapeSummary {
        shapes,
        srocc: rho,
        matched: model.len(),
    })
}

/// Context experiment over every configuration of `stimuli`; the master
/// seed is `opts.seed`.
pub fn run_context_experiment(
    stimuli: &StimulusConfig,
    net: &NetworkGraph,
    model: &str,
    opts: &ContextOptions,
    human: Option<&[(String, f64)]>,
) -> Result<ExperimentReport> {
    let renderer = stimuli.renderer()?;
    let configs = stimuli.configs();
    let taps = opts.taps.clone().unwrap_or_else(|| default_taps(net));
    let opts = ContextOptions {
        taps: Some(taps),
        ..opts.clone()
    };
    let hashed = serde_json::json!({
        "paradigm": stimuli.paradigm,
        "geometry": stimuli.geometry,
        "grid": stimuli.grid(),
        "glyphs": stimuli.glyphs,
        "shape_layouts": renderer.layouts,
        "context": opts,
    });
    let mut report = ExperimentReport::new(ExperimentKind::Context, model, opts.seed, &hashed)?;
    let results: Vec<ContextResult> = configs
        .par_iter()
        .map(|c| context_experiment(net, &renderer, c, &opts))
        .collect::<Result<_>>()?;

    for r in &results {
        for (t, tap) in r.taps.iter().enumerate() {
            report.row(&r.config_id, tap, "easy", None, None, r.easy[t]);
            report.row(&r.config_id, tap, "hard", None, None, r.hard[t]);
        }
        report.row(&r.config_id, AGGREGATE_TAP, "easy", None, None, r.easy_aggregate);
        report.row(&r.config_id, AGGREGATE_TAP, "hard", None, None, r.hard_aggregate);
        report.row(
            &r.config_id,
            AGGREGATE_TAP,
            DIFFERENCE_CONDITION,
            None,
            None,
            r.easy_aggregate - r.hard_aggregate,
        );
    }
    report.consistency = Some(ConsistencyCounts::tally(results.iter().map(|r| &r.verdict)));
    let verdicts: Vec<_> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "config_id": r.config_id,
                "verdict": r.verdict,
                "easy": r.easy_aggregate,
                "hard": r.hard_aggregate,
                "forwards": r.forwards,
            })
        })
        .collect();
    let mut details = serde_json::json!({ "paradigm": stimuli.paradigm, "verdicts": verdicts });
    report.plots = vec![
        PlotHint::new(
            "line",
            "tap",
            "value",
            &["condition=easy|hard"],
            &["config_id", "condition"],
        ),
        PlotHint::new("bar", "verdict", "count", &["summary.consistency"], &[]),
    ];
    if stimuli.paradigm == Paradigm::Shape {
        let keyed: Vec<(usize, &ContextResult)> = configs.iter().map(|c| c.location_index).zip(&results).collect();
        details["shape"] = serde_json::to_value(shape_summary(&keyed, human)?)?;
        report.plots.push(PlotHint::new(
            "scatter",
            "easy",
            "hard",
            &["tap=aggregate"],
            &["config_id"],
        ));
    }
    report.details = details;
    Ok(report)
}
