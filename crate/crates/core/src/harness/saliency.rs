use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::MaskingDatasetManifest;
use super::table::{MetricTable, PlotHint};
use super::{ExperimentKind, ExperimentReport, NamedEval};
use crate::engine::{default_taps, LayerTap, NetworkGraph};
use crate::error::{Error, Result};
use crate::metrics::{saliency_l1, SaliencyOptions};
use crate::seed::{derive_seed, stable_hash};
use crate::stats::{baseline_predictors, linfit_eval, logistic_linearize, BaselineOptions, LogisticMode};

pub const AGGREGATE_TAP: &str = "aggregate";
pub const BASELINE_TAP: &str = "baseline";
pub const THRESHOLD_CONDITION: &str = "threshold-db";
pub const REGION_MEAN_CONDITION: &str = "region-mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyExperimentOptions {
    /// Level grid, repetitions, order, noise mode and master seed. The
    /// region comes from each record.
    pub saliency: SaliencyOptions,
    /// `None` uses the graph's default taps.
    pub taps: Option<Vec<LayerTap>>,
    pub logistic: LogisticMode,
    /// Equal-count threshold bands of the residual ranking.
    pub bands: usize,
    /// Images listed per band and direction.
    pub top: usize,
    pub baselines: bool,
}

impl Default for SaliencyExperimentOptions {
    fn default() -> Self {
        Self {
            saliency: SaliencyOptions::default(),
            taps: None,
            logistic: LogisticMode::Identity,
            bands: 3,
            top: 5,
            baselines: true,
        }
    }
}

/// Measured minus predicted threshold of one image under the aggregate fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub id: String,
    pub band: usize,
    pub threshold_db: f64,
    pub predicted_db: f64,
    pub residual_db: f64,
    /// Mean pixel value of the noise region.
    pub region_mean: f64,
    /// `over` when the measured threshold lies above the prediction.
    pub direction: String,
}

struct ImageResult {
    id: String,
    threshold: f64,
    region_mean: f64,
    per_level: Vec<(f64, Vec<f64>)>,
    per_tap: Vec<f64>,
    aggregate: f64,
    baselines: Option<[f64; 3]>,
}

/// Saliency of every available image against its measured threshold.
pub fn run_saliency_experiment(
    manifest: &MaskingDatasetManifest,
    net: &NetworkGraph,
    model: &str,
    opts: &SaliencyExperimentOptions,
) -> Result<ExperimentReport> {
    let taps = opts.taps.clone().unwrap_or_else(|| default_taps(net));
    if taps.is_empty() {
        return Err(Error::InvalidArgument("saliency needs at least one tap".into()));
    }
    let input = net.input_shape();
    let hashed = serde_json::json!({
        "options": opts,
        "taps": taps,
        "scale": manifest.scale,
        "pad": manifest.pad,
        "records": manifest.records,
    });
    let mut report = ExperimentReport::new(ExperimentKind::Saliency, model, opts.saliency.seed, &hashed)?;
    report.options = serde_json::to_value(opts)?;
    let present: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| !manifest.is_missing(&r.id))
        .collect();
    report.skipped = manifest.missing.clone();

    let results: Vec<ImageResult> = present
        .par_iter()
        .map(|rec| {
            let (img, region) = manifest.load(rec, input.width, input.height, input.channels)?;
            let seed = derive_seed(opts.saliency.seed, &[stable_hash(&rec.id)]);
            let sal = SaliencyOptions {
                region: Some(region),
                seed,
                ..opts.saliency.clone()
            };
            let r = saliency_l1(net, &img, &taps, &sal)?;
            let baselines = if opts.baselines {
                let b = baseline_predictors(
                    &img,
                    &region,
                    &BaselineOptions {
                        levels_db: opts.saliency.levels_db.clone(),
                        seed,
                        mode: opts.saliency.mode,
                        ..BaselineOptions::default()
                    },
                )?;
                Some([b.rms_contrast, b.snr_db, b.spectral_change])
            } else {
                None
            };
            Ok(ImageResult {
                id: rec.id.clone(),
                threshold: rec.threshold_db,
                region_mean: img.region_mean(&region),
                per_level: r.per_level,
                per_tap: r.per_tap,
                aggregate: r.aggregate,
                baselines,
            })
        })
        .collect::<Result<_>>()?;

    let order = opts.saliency.order.name();
    for r in &results {
        for (t, tap) in taps.iter().enumerate() {
            for (level, values) in &r.per_level {
                report.row(&r.id, &tap.stage, order, Some(*level), None, values[t]);
            }
            report.row(&r.id, &tap.stage, order, None, None, r.per_tap[t]);
        }
        report.row(&r.id, AGGREGATE_TAP, order, None, None, r.aggregate);
        if let Some(b) = r.baselines {
            for (name, v) in ["rms-contrast", "snr-db", "spectral-change"].iter().zip(b) {
                report.row(&r.id, BASELINE_TAP, name, None, None, v);
            }
        }
        report.row(&r.id, "", REGION_MEAN_CONDITION, None, None, r.region_mean);
        report.row(&r.id, "", THRESHOLD_CONDITION, None, None, r.threshold);
    }

    if results.len() >= 3 {
        report.evals = evaluate_saliency_table(&report.table, &opts.logistic)?;
        let x: Vec<f64> = results.iter().map(|r| r.aggregate).collect();
        let lin = logistic_linearize(
            &x,
            &opts.logistic,
            Some(&results.iter().map(|r| r.threshold).collect::<Vec<_>>()),
        )?;
        let main = &report.evals[0].eval;
        let predicted: Vec<f64> = lin.values.iter().map(|v| main.slope * v + main.intercept).collect();
        report.residuals = residual_ranking(&results, &predicted, opts.bands, opts.top);
    }
    report.details = serde_json::json!({
        "images": results.len(),
        "taps": taps.iter().map(|t| &t.stage).collect::<Vec<_>>(),
        "scale": manifest.scale,
        "full_set": manifest.is_full_set(),
    });
    report.plots = vec![
        PlotHint::new("scatter", "value", "threshold-db", &["tap=aggregate"], &[]),
        PlotHint::new("line", "tap", "r2", &["summary.evals"], &[]),
        PlotHint::new("line", "level_or_contrast", "value", &[], &["tap"]),
    ];
    Ok(report)
}

/// Linear-fit statistics of every scalar predictor in a saliency table
/// against its threshold rows: the aggregate first, then each tap, then
/// the baselines. Running this on a table read back from CSV reproduces
/// the numbers of the original run exactly.
pub fn evaluate_saliency_table(table: &MetricTable, logistic: &LogisticMode) -> Result<Vec<NamedEval>> {
    let ids: Vec<&str> = table
        .scalars("", THRESHOLD_CONDITION)
        .map(|r| r.config_id.as_str())
        .collect();
    let target: Vec<f64> = table.scalars("", THRESHOLD_CONDITION).map(|r| r.value).collect();
    if ids.is_empty() {
        return Err(Error::InvalidArgument("table has no threshold rows".into()));
    }
    let mut series: Vec<(String, String)> = Vec::new();
    for r in &table.rows {
        if r.tap.is_empty() || r.level_or_contrast.is_some() || r.frequency.is_some() {
            continue;
        }
        let key = (r.tap.clone(), r.condition.clone());
        if !series.contains(&key) {
            series.push(key);
        }
    }
    series.sort_by_key(|(tap, _)| match tap.as_str() {
        AGGREGATE_TAP => 0,
        BASELINE_TAP => 2,
        _ => 1,
    });
    let mut evals = Vec::new();
    for (tap, condition) in series {
        let mut x = Vec::with_capacity(ids.len());
        for id in &ids {
            let v = table
                .scalars(&tap, &condition)
                .find(|r| r.config_id == *id)
                .ok_or_else(|| Error::Dataset(format!("no `{tap}` / `{condition}` value for `{id}`")))?;
            x.push(v.value);
        }
        let lin = logistic_linearize(&x, logistic, Some(&target))?;
        let mut eval = linfit_eval(&lin.values, &target)?;
        eval.logistic = lin.params.is_some();
        let name = match tap.as_str() {
            AGGREGATE_TAP => AGGREGATE_TAP.to_string(),
            BASELINE_TAP => format!("{BASELINE_TAP}:{condition}"),
            t => format!("tap:{t}"),
        };
        evals.push(NamedEval { name, eval });
    }
    Ok(evals)
}

fn residual_ranking(results: &[ImageResult], predicted: &[f64], bands: usize, top: usize) -> Vec<Residual> {
    let bands = bands.max(1);
    let mut idx: Vec<usize> = (0..results.len()).collect();
    idx.sort_by(|&a, &b| results[a].threshold.total_cmp(&results[b].threshold).then(a.cmp(&b)));
    let n = idx.len();
    let mut out = Vec::new();
    for band in 0..bands {
        let members = &idx[band * n / bands..(band + 1) * n / bands];
        let mut ranked: Vec<(usize, f64)> = members
            .iter()
            .map(|&i| (i, results[i].threshold - predicted[i]))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let over = ranked.iter().filter(|r| r.1 > 0.0).take(top);
        let under = ranked.iter().rev().filter(|r| r.1 < 0.0).take(top);
        for &(i, res) in over.chain(under) {
            out.push(Residual {
                id: results[i].id.clone(),
                band,
                threshold_db: results[i].threshold,
                predicted_db: predicted[i],
                residual_db: res,
                region_mean: results[i].region_mean,
                direction: if res > 0.0 { "over" } else { "under" }.into(),
            });
        }
    }
    out
}
