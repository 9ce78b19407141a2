use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 8;

/// Activations of every neuron of one tap over a labeled stimulus set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiSample {
    /// Category of each sample row.
    pub labels: Vec<usize>,
    /// One row per sample, one column per neuron.
    pub rows: Vec<Vec<f64>>,
    pub bins: usize,
}

impl MiSample {
    pub fn new(labels: Vec<usize>, rows: Vec<Vec<f64>>) -> Self {
        Self {
            labels,
            rows,
            bins: DEFAULT_BINS,
        }
    }

    pub fn neurons(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Category count and samples per category.
    fn validate(&self) -> Result<(usize, usize)> {
        if self.bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if self.labels.len() != self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} sample rows",
                self.labels.len(),
                self.rows.len()
            )));
        }
        let width = self.neurons();
        if self.rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("sample rows differ in neuron count".into()));
        }
        let categories = self.labels.iter().max().map_or(0, |m| m + 1);
        if categories < 2 {
            return Err(Error::InvalidArgument(
                "mutual information needs at least 2 categories".into(),
            ));
        }
        let mut counts = vec![0usize; categories];
        for &l in &self.labels {
            counts[l] += 1;
        }
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::InvalidArgument(format!(
                "categories need equal sample counts, got {counts:?}"
            )));
        }
        Ok((categories, counts[0]))
    }
}

/// Bin index of every value with edges at the empirical `k`-quantiles of
/// the values: `q_j = sorted[floor(j n / k)]` for `j = 1..k`, and a value
/// falls in bin `#{j : v >= q_j}`. Distinct values give bin counts that
/// differ by at most one; tied values always share a bin.
pub fn equal_amount_bins(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..k).map(|j| sorted[(j * n / k).min(n.saturating_sub(1))]).collect();
    values
        .iter()
        .map(|v| edges.partition_point(|e| e.total_cmp(v).is_le()))
        .collect()
}

/// Plug-in `H(C) - sum_b p(b) H(C|b)` in bits from a `bins x categories`
/// count table.
pub fn mi_from_counts(joint: &[Vec<usize>]) -> f64 {
    let categories = joint.first().map_or(0, Vec::len);
    let total: usize = joint.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut class = vec![0usize; categories];
    for row in joint {
        for (c, &v) in row.iter().enumerate() {
            class[c] += v;
        }
    }
    let h_c = entropy(&class, n);
    let mut h_cond = 0.0;
    for row in joint {
        let nb: usize = row.iter().sum();
        if nb > 0 {
            h_cond += nb as f64 / n * entropy(row, nb as f64);
        }
    }
    (h_c - h_cond).max(0.0)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information between category and binned activation, one value
/// per neuron (column).
pub fn mi_per_neuron(sample: &MiSample) -> Result<Vec<f64>> {
    let (categories, _) = sample.validate()?;
    let k = sample.bins;
    let mut column = vec![0.0; sample.rows.len()];
    let mut joint = vec![vec![0usize; categories]; k];
    Ok((0..sample.neurons())
        .map(|i| {
            for (dst, row) in column.iter_mut().zip(&sample.rows) {
                *dst = row[i];
            }
            for row in &mut joint {
                row.fill(0);
            }
            for (b, &l) in equal_amount_bins(&column, k).into_iter().zip(&sample.labels) {
                joint[b][l] += 1;
            }
            mi_from_counts(&joint)
        })
        .collect())
}

/// Mean over neurons within each tap, then over taps.
pub fn mi_aggregate(per_tap: &[Vec<f64>]) -> f64 {
    if per_tap.is_empty() {
        return 0.0;
    }
    per_tap.iter().map(|t| mean(t)).sum::<f64>() / per_tap.len() as f64
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_categories_carry_one_bit() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1].to_vec();
        let rows = [0.1, 0.2, 0.3, 0.4, 5.0, 6.0, 7.0, 8.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let mi = mi_per_neuron(&MiSample::new(labels, rows)).unwrap();
        assert_eq!(mi, vec![1.0]);
    }

    #[test]
    fn constant_neuron_is_zero() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let rows = vec![vec![3.0]; 6];
        assert_eq!(mi_per_neuron(&MiSample::new(labels, rows)).unwrap(), vec![0.0]);
    }

    #[test]
    fn unequal_counts_rejected() {
        let s = MiSample::new(vec![0, 0, 1], vec![vec![1.0]; 3]);
        assert!(mi_per_neuron(&s).is_err());
    }

    #[test]
    fn bins_split_ranks_evenly() {
        let v: Vec<f64> = (0..10).map(|i| (i * 7 % 10) as f64).collect();
        let b = equal_amount_bins(&v, 4);
        let mut counts = [0; 4];
        for x in b {
            counts[x] += 1;
        }
        assert_eq!(counts, [2, 3, 2, 3]);
    }

    #[test]
    fn aggregate_is_mean_of_tap_means() {
        let taps = vec![vec![1.0], vec![0.0, 0.0, 0.0]];
        assert_eq!(mi_aggregate(&taps), 0.5);
    }
}
