use serde::{Deserialize, Serialize};

use super::mi::mean;
use super::MetricOrder;
use crate::engine::{forward_with, ActivationSnapshot, ForwardOptions, LayerTap, NetworkGraph};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Rect};
use crate::seed::derive_seed;
use crate::stimuli::{perturb_image, NoiseMode, NoiseSpec};

/// -40 to 25 dB in 5 dB steps.
pub fn default_levels_db() -> Vec<f64> {
    (0..14).map(|i| -40.0 + 5.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyOptions {
    pub levels_db: Vec<f64>,
    pub repetitions: usize,
    pub order: MetricOrder,
    pub mode: NoiseMode,
    /// Noise region; defaults to the centered half-side square.
    pub region: Option<Rect>,
    pub seed: u64,
    #[serde(skip)]
    pub forward: ForwardOptions,
}

impl Default for SaliencyOptions {
    fn default() -> Self {
        Self {
            levels_db: default_levels_db(),
            repetitions: 10,
            order: MetricOrder::default(),
            mode: NoiseMode::default(),
            region: None,
            seed: 0,
            forward: ForwardOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyResult {
    pub taps: Vec<String>,
    /// Mean over levels of the per-level tap values.
    pub per_tap: Vec<f64>,
    /// Unweighted mean of `per_tap`.
    pub aggregate: f64,
    /// `(level_db, value per tap)`.
    pub per_level: Vec<(f64, Vec<f64>)>,
    pub repetitions: usize,
    pub order: MetricOrder,
}

/// Mean absolute activation change under additive noise, per neuron, then
/// averaged over neurons, levels and taps in that order.
pub fn saliency_l1(
    net: &NetworkGraph,
    image: &ImagePlane,
    taps: &[LayerTap],
    opts: &SaliencyOptions,
) -> Result<SaliencyResult> {
    if taps.is_empty() {
        return Err(Error::InvalidArgument("saliency needs at least one tap".into()));
    }
    if opts.repetitions == 0 {
        return Err(Error::InvalidArgument("saliency needs at least one repetition".into()));
    }
    let region = opts
        .region
        .unwrap_or_else(|| Rect::centered_half(image.width(), image.height()));
    let base = forward_with(net, image, taps, opts.forward)?;
    let reps = opts.repetitions as f64;
    let mut per_level = Vec::with_capacity(opts.levels_db.len());
    for (li, &level) in opts.levels_db.iter().enumerate() {
        let mut acc = Accumulator::new(&base, opts.order);
        for rep in 0..opts.repetitions {
            let spec =
                NoiseSpec::new(region, level, derive_seed(opts.seed, &[li as u64, rep as u64])).with_mode(opts.mode);
            let noisy = perturb_image(image, &spec)?;
            let snap = forward_with(net, &noisy, taps, opts.forward)?;
            acc.add(&base, &snap);
        }
        per_level.push((level, acc.finish(reps)));
    }
    let per_tap: Vec<f64> = (0..taps.len())
        .map(|t| mean(&per_level.iter().map(|(_, v)| v[t]).collect::<Vec<_>>()))
        .collect();
    Ok(SaliencyResult {
        taps: taps.iter().map(|t| t.stage.clone()).collect(),
        aggregate: mean(&per_tap),
        per_tap,
        per_level,
        repetitions: opts.repetitions,
        order: opts.order,
    })
}

/// Running sums of one experiment cell. Mean-of-abs only needs the
/// per-tap sum of neuron means; abs-of-mean keeps a signed sum per neuron.
pub(crate) enum Accumulator {
    Scalar(Vec<f64>),
    PerNeuron(Vec<Vec<f64>>),
}

impl Accumulator {
    pub(crate) fn new(base: &ActivationSnapshot, order: MetricOrder) -> Self {
        match order {
            MetricOrder::MeanOfAbs => Accumulator::Scalar(vec![0.0; base.len()]),
            MetricOrder::AbsOfMean => {
                Accumulator::PerNeuron(base.taps.iter().map(|(_, v)| vec![0.0; v.len()]).collect())
            }
        }
    }

    pub(crate) fn add(&mut self, base: &ActivationSnapshot, snap: &ActivationSnapshot) {
        let pairs = base.taps.iter().zip(&snap.taps).map(|((_, b), (_, s))| (b, s));
        match self {
            Accumulator::Scalar(acc) => {
                for (a, (b, s)) in acc.iter_mut().zip(pairs) {
                    let sum: f64 = b.iter().zip(s).map(|(b, s)| (s - b).abs()).sum();
                    *a += sum / b.len().max(1) as f64;
                }
            }
            Accumulator::PerNeuron(acc) => {
                for (a, (b, s)) in acc.iter_mut().zip(pairs) {
                    for ((a, b), s) in a.iter_mut().zip(b).zip(s) {
                        *a += s - b;
                    }
                }
            }
        }
    }

    /// Like [`Accumulator::add`] for values of tap `t` starting at neuron `lo`.
    pub(crate) fn add_chunk(&mut self, base: &ActivationSnapshot, t: usize, lo: usize, values: &[f64]) {
        let b = &base.taps[t].1;
        let b_chunk = &b[lo..lo + values.len()];
        match self {
            Accumulator::Scalar(acc) => {
                let sum: f64 = b_chunk.iter().zip(values).map(|(b, s)| (s - b).abs()).sum();
                acc[t] += sum / b.len().max(1) as f64;
            }
            Accumulator::PerNeuron(acc) => {
                for ((a, b), s) in acc[t][lo..].iter_mut().zip(b_chunk).zip(values) {
                    *a += s - b;
                }
            }
        }
    }

    /// Per-tap values after `reps` repetitions.
    pub(crate) fn finish(&self, reps: f64) -> Vec<f64> {
        match self {
            Accumulator::Scalar(acc) => acc.iter().map(|a| a / reps).collect(),
            Accumulator::PerNeuron(acc) => acc
                .iter()
                .map(|a| a.iter().map(|s| (s / reps).abs()).sum::<f64>() / a.len().max(1) as f64)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{GraphBuilder, Op, Preprocess, Shape};
    use crate::stimuli::{synth_noise, NOISE_DISABLED};

    fn data_only(n: usize) -> NetworkGraph {
        let mut b = GraphBuilder::new("id", Shape::new(1, n, n));
        b.push("out", Op::Relu, &["data"]);
        b.build(Preprocess::default()).unwrap()
    }

    #[test]
    fn zero_noise_is_zero() {
        let net = data_only(8);
        let img = ImagePlane::filled(8, 8, 1, 100.0);
        let opts = SaliencyOptions {
            levels_db: vec![NOISE_DISABLED; 2],
            repetitions: 3,
            ..Default::default()
        };
        let r = saliency_l1(&net, &img, &[LayerTap::new("data")], &opts).unwrap();
        assert_eq!(r.aggregate, 0.0);
    }

    #[test]
    fn single_repetition_is_mean_abs_field() {
        let n = 12;
        let net = data_only(n);
        let img = ImagePlane::filled(n, n, 1, 120.0);
        let opts = SaliencyOptions {
            levels_db: vec![-10.0],
            repetitions: 1,
            seed: 9,
            ..Default::default()
        };
        let r = saliency_l1(&net, &img, &[LayerTap::new("data")], &opts).unwrap();
        let spec = NoiseSpec::new(Rect::centered_half(n, n), -10.0, derive_seed(9, &[0, 0]));
        let field = synth_noise(&spec, n, n, 120.0).unwrap();
        let want = field.data().iter().map(|v| v.abs()).sum::<f64>() / (n * n) as f64;
        assert!((r.aggregate - want).abs() < 1e-12, "{} vs {want}", r.aggregate);
    }

    #[test]
    fn no_taps_is_an_error() {
        let net = data_only(4);
        let img = ImagePlane::filled(4, 4, 1, 1.0);
        assert!(saliency_l1(&net, &img, &[], &SaliencyOptions::default()).is_err());
    }
}
