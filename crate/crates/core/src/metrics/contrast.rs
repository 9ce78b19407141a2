use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::saliency::Accumulator;
use super::MetricOrder;
use crate::engine::{forward_with, AffineFamily, ForwardOptions, LayerTap, NetworkGraph};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};
use crate::stats::linfit_eval;
use crate::stimuli::{default_contrasts, default_frequencies, render_grating, GratingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastOptions {
    pub contrasts: Vec<f64>,
    /// Cycles per image width; values at or above the Nyquist limit of the
    /// model input are dropped.
    pub frequencies: Vec<f64>,
    pub repetitions: usize,
    pub order: MetricOrder,
    pub seed: u64,
    #[serde(skip)]
    pub forward: ForwardOptions,
}

impl Default for ContrastOptions {
    fn default() -> Self {
        Self {
            contrasts: default_contrasts(),
            frequencies: default_frequencies(),
            repetitions: 250,
            order: MetricOrder::default(),
            seed: 0,
            forward: ForwardOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResponseTable {
    pub taps: Vec<String>,
    pub contrasts: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// `values[tap][contrast][frequency]`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub repetitions: usize,
    pub order: MetricOrder,
}

impl ContrastResponseTable {
    pub fn tap_index(&self, stage: &str) -> Result<usize> {
        self.taps
            .iter()
            .position(|t| t == stage)
            .ok_or_else(|| Error::InvalidArgument(format!("table has no tap `{stage}`")))
    }

    /// `(contrast, value)` pairs of one frequency column with positive
    /// contrast, in grid order.
    fn column(&self, tap: usize, fi: usize) -> Vec<(f64, f64)> {
        self.contrasts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(ci, &c)| (c, self.values[tap][ci][fi]))
            .collect()
    }
}

/// Mean activation change between a gray field and gratings of random
/// orientation and phase. Each repetition draws one orientation and phase
/// per frequency and reuses it for every contrast.
pub fn contrast_response(
    net: &NetworkGraph,
    taps: &[LayerTap],
    opts: &ContrastOptions,
) -> Result<ContrastResponseTable> {
    if taps.is_empty() {
        return Err(Error::InvalidArgument(
            "contrast response needs at least one tap".into(),
        ));
    }
    if opts.repetitions == 0 {
        return Err(Error::InvalidArgument(
            "contrast response needs at least one repetition".into(),
        ));
    }
    if let Some(c) = opts.contrasts.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("contrast {c} is outside [0, 1]")));
    }
    let shape = net.input_shape();
    let (w, h, ch) = (shape.width, shape.height, shape.channels);
    let nyquist = w as f64 / 2.0;
    let frequencies: Vec<f64> = opts.frequencies.iter().copied().filter(|&f| f < nyquist).collect();
    if frequencies.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no grating frequency below the {nyquist} cycle Nyquist limit"
        )));
    }
    let gray_image = render_grating(&GratingSpec::gray(), w, h, ch)?;
    let gray = forward_with(net, &gray_image, taps, opts.forward)?;
    // A grating at contrast c is gray + c * (full-contrast grating - gray).
    let family = AffineFamily::new(net, &gray_image, taps, opts.forward)?;
    let live: Vec<usize> = (0..opts.contrasts.len())
        .filter(|&ci| opts.contrasts[ci] > 0.0)
        .collect();
    let scales: Vec<f64> = live.iter().map(|&ci| opts.contrasts[ci]).collect();
    let reps = opts.repetitions as f64;

    // columns[frequency][contrast][tap]
    let columns: Vec<Vec<Vec<f64>>> = frequencies
        .par_iter()
        .enumerate()
        .map(|(fi, &f)| {
            let mut acc: Vec<Accumulator> = opts
                .contrasts
                .iter()
                .map(|_| Accumulator::new(&gray, opts.order))
                .collect();
            for rep in 0..opts.repetitions {
                let mut r = rng(derive_seed(opts.seed, &[fi as u64, rep as u64]));
                let orientation = r.random::<f64>() * PI;
                let phase = r.random::<f64>() * TAU;
                let probe = render_grating(&GratingSpec::new(1.0, f, orientation, phase), w, h, ch)?;
                family.for_each_chunk(net, &probe, &scales, |k, t, lo, v| {
                    acc[live[k]].add_chunk(&gray, t, lo, v);
                    Ok(())
                })?;
            }
            Ok(acc
                .iter()
                .zip(&opts.contrasts)
                .map(|(a, &c)| {
                    if c == 0.0 {
                        vec![0.0; taps.len()]
                    } else {
                        a.finish(reps)
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let values = (0..taps.len())
        .map(|t| {
            (0..opts.contrasts.len())
                .map(|ci| (0..frequencies.len()).map(|fi| columns[fi][ci][t]).collect())
                .collect()
        })
        .collect();
    Ok(ContrastResponseTable {
        taps: taps.iter().map(|t| t.stage.clone()).collect(),
        contrasts: opts.contrasts.clone(),
        frequencies,
        values,
        repetitions: opts.repetitions,
        order: opts.order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoCurve {
    pub tap: String,
    pub target: f64,
    pub frequencies: Vec<f64>,
    /// `None` where the target lies outside the sampled response range.
    pub contrasts: Vec<Option<f64>>,
}

/// Contrast at which the response first reaches `target`, per frequency,
/// interpolating linearly in log10 contrast.
pub fn iso_output_invert(table: &ContrastResponseTable, tap: &str, target: f64) -> Result<IsoCurve> {
    if !target.is_finite() {
        return Err(Error::Domain(format!("iso-output target must be finite, got {target}")));
    }
    let t = table.tap_index(tap)?;
    let mut contrasts = Vec::with_capacity(table.frequencies.len());
    for fi in 0..table.frequencies.len() {
        let mut col = table.column(t, fi);
        if col.len() < 2 {
            return Err(Error::InvalidArgument(
                "iso-output inversion needs two positive contrasts".into(),
            ));
        }
        col.sort_by(|a, b| a.0.total_cmp(&b.0));
        contrasts.push(first_crossing(&col, target));
    }
    Ok(IsoCurve {
        tap: tap.to_string(),
        target,
        frequencies: table.frequencies.clone(),
        contrasts,
    })
}

fn first_crossing(col: &[(f64, f64)], target: f64) -> Option<f64> {
    for pair in col.windows(2) {
        let ((c0, v0), (c1, v1)) = (pair[0], pair[1]);
        if v0 == target {
            return Some(c0);
        }
        if (v0 - target) * (v1 - target) < 0.0 || v1 == target {
            let s = (target - v0) / (v1 - v0);
            let (l0, l1) = (c0.log10(), c1.log10());
            return Some(10f64.powf(l0 + s * (l1 - l0)));
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearity {
    pub tap: String,
    pub frequencies: Vec<f64>,
    /// R^2 of the response against log10 contrast, per frequency.
    pub r2: Vec<f64>,
    /// Frequencies whose response column is constant (R^2 reported as 0).
    pub degenerate: Vec<bool>,
    pub mean_r2: f64,
}

pub fn log_linearity_r2(table: &ContrastResponseTable, tap: &str) -> Result<LogLinearity> {
    let t = table.tap_index(tap)?;
    let mut r2 = Vec::new();
    let mut degenerate = Vec::new();
    for fi in 0..table.frequencies.len() {
        let col = table.column(t, fi);
        if col.len() < 3 {
            return Err(Error::InvalidArgument(
                "log-linearity needs three positive contrasts".into(),
            ));
        }
        let x: Vec<f64> = col.iter().map(|(c, _)| c.log10()).collect();
        let y: Vec<f64> = col.iter().map(|(_, v)| *v).collect();
        let e = linfit_eval(&x, &y)?;
        r2.push(e.r2);
        degenerate.push(e.degenerate);
    }
    let mean_r2 = r2.iter().sum::<f64>() / r2.len() as f64;
    Ok(LogLinearity {
        tap: tap.to_string(),
        frequencies: table.frequencies.clone(),
        r2,
        degenerate,
        mean_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAlignment {
    /// Factor applied to model frequencies so the two minima coincide.
    pub scale: f64,
    /// Squared correlation of log10 contrasts after alignment.
    pub r2: f64,
    /// `(frequency, human log10 contrast, model log10 contrast)`.
    pub pairs: Vec<(f64, f64, f64)>,
}

fn interior_minimum(curve: &[(f64, f64)], name: &str) -> Result<f64> {
    if curve.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{name} curve needs at least three points"
        )));
    }
    if curve
        .iter()
        .any(|&(f, c)| !(f > 0.0 && c > 0.0 && f.is_finite() && c.is_finite()))
    {
        return Err(Error::Domain(format!(
            "{name} curve needs positive finite frequencies and contrasts"
        )));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument(format!(
            "{name} curve frequencies must increase"
        )));
    }
    let (i, _) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty curve");
    if i == 0 || i == curve.len() - 1 {
        return Err(Error::InvalidArgument(format!("{name} curve has no interior minimum")));
    }
    Ok(curve[i].0)
}

/// Aligns two iso-output curves `(frequency, contrast)` by scaling the
/// model frequencies so the minima coincide, then compares log10
/// contrasts at the human frequencies inside the scaled model range.
pub fn align_frequency_scale(model: &[(f64, f64)], human: &[(f64, f64)]) -> Result<FrequencyAlignment> {
    let scale = interior_minimum(human, "human")? / interior_minimum(model, "model")?;
    let scaled: Vec<(f64, f64)> = model.iter().map(|&(f, c)| ((scale * f).log10(), c.log10())).collect();
    let mut pairs = Vec::new();
    for &(f, c) in human {
        let lf = f.log10();
        if let Some(m) = interp(&scaled, lf) {
            pairs.push((f, c.log10(), m));
        }
    }
    let h: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let m: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let r2 = linfit_eval(&h, &m)?.r2;
    Ok(FrequencyAlignment { scale, r2, pairs })
}

fn interp(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x == x0 {
            return Some(y0);
        }
        if x == x1 {
            return Some(y1);
        }
        if x0 < x && x < x1 {
            return Some(y0 + (x - x0) / (x1 - x0) * (y1 - y0));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64, f64) -> f64, contrasts: Vec<f64>, frequencies: Vec<f64>) -> ContrastResponseTable {
        let values = vec![contrasts
            .iter()
            .map(|&c| frequencies.iter().map(|&q| f(c, q)).collect())
            .collect()];
        ContrastResponseTable {
            taps: vec!["t".into()],
            contrasts,
            frequencies,
            values,
            repetitions: 1,
            order: MetricOrder::MeanOfAbs,
        }
    }

    fn log_grid(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn iso_inverse_of_square() {
        let t = synthetic(|c, _| c * c, log_grid(401), vec![1.0, 2.0]);
        let iso = iso_output_invert(&t, "t", 0.25).unwrap();
        for c in iso.contrasts {
            assert!((c.unwrap() - 0.5).abs() < 1e-3);
        }
        assert_eq!(iso_output_invert(&t, "t", 2.0).unwrap().contrasts, vec![None, None]);
        assert!(iso_output_invert(&t, "t", f64::NAN).is_err());
    }

    #[test]
    fn log_linear_responder() {
        let t = synthetic(|c, _| 3.0 + 2.0 * c.log10(), log_grid(9), vec![4.0]);
        let r = log_linearity_r2(&t, "t").unwrap();
        assert!((r.mean_r2 - 1.0).abs() < 1e-12);
        let flat = synthetic(|_, _| 2.0, log_grid(9), vec![4.0]);
        let r = log_linearity_r2(&flat, "t").unwrap();
        assert_eq!(r.r2, vec![0.0]);
        assert_eq!(r.degenerate, vec![true]);
    }

    #[test]
    fn alignment_of_doubled_copy() {
        let human: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&f: &f64| (f, 0.01 * (1.0 + (f.log2() - 2.0).powi(2))))
            .collect();
        let model: Vec<(f64, f64)> = human.iter().map(|&(f, c)| (2.0 * f, c)).collect();
        let a = align_frequency_scale(&model, &human).unwrap();
        assert_eq!(a.scale, 0.5);
        assert!((a.r2 - 1.0).abs() < 1e-12);
        let self_a = align_frequency_scale(&human, &human).unwrap();
        assert_eq!(self_a.scale, 1.0);
        let mono: Vec<(f64, f64)> = human.iter().map(|&(f, _)| (f, f)).collect();
        assert!(align_frequency_scale(&mono, &human).is_err());
    }
}
