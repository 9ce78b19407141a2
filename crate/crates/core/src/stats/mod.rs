//! Evaluation statistics: linear-fit R^2 and RMSE, rank correlation,
//! logistic linearization and simple image-statistic predictors.

mod baseline;
mod logistic;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_predictors, BaselineOptions, BaselinePredictors};
pub use logistic::{fit_logistic, logistic_linearize, Linearized, Logistic4, LogisticMode};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEval {
    /// Squared Pearson correlation.
    pub r2: f64,
    /// `None` when either vector is constant.
    pub srocc: Option<f64>,
    /// Residual RMS of the least-squares line, in target units.
    pub rmse: f64,
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Constant predictor or target.
    pub degenerate: bool,
    /// Predictor passed through a fitted logistic first.
    pub logistic: bool,
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::InvalidArgument(format!(
            "need at least {min} points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("statistics need finite values".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centered sums `(sxx, syy, sxy)`.
fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let mut s = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        s.0 += dx * dx;
        s.1 += dy * dy;
        s.2 += dx * dy;
    }
    s
}

/// Pearson correlation, `None` for a constant argument.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y, 2)?;
    let (sxx, syy, sxy) = moments(x, y);
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Ordinary least squares of `target` on `predictor`.
pub fn linfit_eval(predictor: &[f64], target: &[f64]) -> Result<PredictionEval> {
    check_pair(predictor, target, 3)?;
    let n = predictor.len();
    let (sxx, syy, sxy) = moments(predictor, target);
    let (mx, my) = (mean(predictor), mean(target));
    let (slope, r2, degenerate) = if sxx == 0.0 || syy == 0.0 {
        (0.0, 0.0, true)
    } else {
        (sxy / sxx, (sxy * sxy / (sxx * syy)).min(1.0), false)
    };
    let intercept = my - slope * mx;
    let sse: f64 = predictor
        .iter()
        .zip(target)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(PredictionEval {
        r2,
        srocc: srocc(predictor, target)?,
        rmse: (sse / n as f64).sqrt(),
        n,
        slope,
        intercept,
        degenerate,
        logistic: false,
    })
}

/// Ranks starting at 1, tied values sharing their mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks. `None`
/// when either argument is constant.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y, 3)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let e = linfit_eval(&x, &y).unwrap();
        assert!((e.r2 - 1.0).abs() < 1e-15 && e.rmse < 1e-12);
        assert_eq!(e.srocc, Some(1.0));
    }

    #[test]
    fn constant_predictor_is_flagged() {
        let e = linfit_eval(&[2.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(e.degenerate && e.r2 == 0.0 && e.srocc.is_none());
        assert!((e.rmse - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn monotone_orders() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(srocc(&x, &[1.0, 4.0, 9.0, 16.0]).unwrap(), Some(1.0));
        assert_eq!(srocc(&x, &[0.0, -1.0, -5.0, -6.0]).unwrap(), Some(-1.0));
    }

    #[test]
    fn ties_share_mean_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn short_inputs_rejected() {
        assert!(linfit_eval(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(srocc(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }
}
