use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::mi::{mean, mi_aggregate, mi_per_neuron, MiSample, DEFAULT_BINS};
use crate::engine::{default_taps, forward_with, ActivationSnapshot, ForwardOptions, LayerTap, NetworkGraph};
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::seed::{derive_seed, stable_hash};
use crate::stimuli::{CategoryLabel, Condition, PatternConfig, PatternRenderer};

/// Aggregate MI differences at or below this are reported as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Neurons kept per tap by default (see [`crate::engine::neuron_subset`]).
pub const DEFAULT_MAX_NEURONS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// The easy condition carries more category information.
    Consistent,
    Inconsistent,
    Tie,
}

impl Verdict {
    pub fn from_mi(easy: f64, hard: f64) -> Self {
        let d = easy - hard;
        if d.abs() <= TIE_TOLERANCE {
            Verdict::Tie
        } else if d > 0.0 {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Tie => "tie",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextOptions {
    pub samples_per_category: usize,
    pub bins: usize,
    pub seed: u64,
    /// `None` uses the graph's default taps.
    pub taps: Option<Vec<LayerTap>>,
    /// `None` keeps every neuron.
    pub max_neurons_per_tap: Option<usize>,
    #[serde(skip)]
    pub forward: ForwardOptions,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            samples_per_category: 250,
            bins: DEFAULT_BINS,
            seed: 0,
            taps: None,
            max_neurons_per_tap: Some(DEFAULT_MAX_NEURONS),
            forward: ForwardOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResult {
    pub config_id: String,
    pub taps: Vec<String>,
    /// Mean per-neuron MI of each tap, easy condition.
    pub easy: Vec<f64>,
    pub hard: Vec<f64>,
    pub easy_aggregate: f64,
    pub hard_aggregate: f64,
    pub verdict: Verdict,
    /// Forward passes actually run; repeated stimuli are evaluated once.
    pub forwards: usize,
}

/// Seed of sample `index` of `category`; shared by both conditions so easy
/// and hard stimuli differ only in the target element.
pub fn sample_seed(master: u64, config: &PatternConfig, category: usize, index: usize) -> u64 {
    derive_seed(master, &[stable_hash(&config.id()), category as u64, index as u64])
}

/// Renders `samples_per_category` stimuli per category in both conditions
/// and compares the category information carried by the taps.
pub fn context_experiment(
    net: &NetworkGraph,
    renderer: &PatternRenderer,
    config: &PatternConfig,
    opts: &ContextOptions,
) -> Result<ContextResult> {
    if opts.samples_per_category == 0 {
        return Err(Error::InvalidArgument("need at least one sample per category".into()));
    }
    let taps = opts.taps.clone().unwrap_or_else(|| default_taps(net));
    if taps.is_empty() {
        return Err(Error::InvalidArgument(
            "context experiment needs at least one tap".into(),
        ));
    }
    let fwd = ForwardOptions {
        max_neurons_per_tap: opts.max_neurons_per_tap,
        ..opts.forward
    };
    let mut forwards = 0;
    let mut per_condition = Vec::with_capacity(2);
    for condition in [Condition::Easy, Condition::Hard] {
        let mut labels = Vec::new();
        let mut images = Vec::new();
        for category in 0..config.paradigm.category_count() {
            for s in 0..opts.samples_per_category {
                let seed = sample_seed(opts.seed, config, category, s);
                images.push(renderer.render(config, CategoryLabel::new(category, condition), seed)?);
                labels.push(category);
            }
        }
        let (mi, n) = condition_mi(net, &taps, &images, &labels, opts.bins, fwd)?;
        forwards += n;
        per_condition.push(mi);
    }
    let hard = per_condition.pop().expect("two conditions");
    let easy = per_condition.pop().expect("two conditions");
    let (ea, ha) = (mi_aggregate(&easy), mi_aggregate(&hard));
    Ok(ContextResult {
        config_id: config.id(),
        taps: taps.iter().map(|t| t.stage.clone()).collect(),
        easy: easy.iter().map(|v| mean(v)).collect(),
        hard: hard.iter().map(|v| mean(v)).collect(),
        easy_aggregate: ea,
        hard_aggregate: ha,
        verdict: Verdict::from_mi(ea, ha),
        forwards,
    })
}

/// Per-neuron MI of every tap over a labeled image set, plus the number of
/// distinct images evaluated.
pub fn condition_mi(
    net: &NetworkGraph,
    taps: &[LayerTap],
    images: &[ImagePlane],
    labels: &[usize],
    bins: usize,
    opts: ForwardOptions,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut cache: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut snaps: Vec<ActivationSnapshot> = Vec::new();
    let mut index = Vec::with_capacity(images.len());
    for img in images {
        let key: Vec<u64> = img.data().iter().map(|v| v.to_bits()).collect();
        let i = match cache.get(&key) {
            Some(&i) => i,
            None => {
                snaps.push(forward_with(net, img, taps, opts)?);
                cache.insert(key, snaps.len() - 1);
                snaps.len() - 1
            }
        };
        index.push(i);
    }
    let mi = (0..taps.len())
        .map(|t| {
            let rows = index.iter().map(|&i| snaps[i].taps[t].1.clone()).collect();
            let sample = MiSample {
                labels: labels.to_vec(),
                rows,
                bins,
            };
            mi_per_neuron(&sample)
        })
        .collect::<Result<_>>()?;
    Ok((mi, snaps.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(Verdict::from_mi(0.5, 0.2), Verdict::Consistent);
        assert_eq!(Verdict::from_mi(0.2, 0.5), Verdict::Inconsistent);
        assert_eq!(Verdict::from_mi(0.3, 0.3 + 1e-13), Verdict::Tie);
    }
}
