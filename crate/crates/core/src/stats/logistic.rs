use serde::{Deserialize, Serialize};

use super::{check_pair, mean, moments};
use crate::error::{Error, Result};

/// `f(x) = lower + (upper - lower) / (1 + exp(-(x - center) / |width|))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic4 {
    pub upper: f64,
    pub lower: f64,
    pub center: f64,
    pub width: f64,
}

impl Logistic4 {
    pub fn eval(&self, x: f64) -> f64 {
        self.lower + (self.upper - self.lower) / (1.0 + (-(x - self.center) / self.width.abs()).exp())
    }

    fn params(&self) -> [f64; 4] {
        [self.upper, self.lower, self.center, self.width]
    }

    fn from_params(p: [f64; 4]) -> Self {
        Self {
            upper: p[0],
            lower: p[1],
            center: p[2],
            width: p[3],
        }
    }

    /// Partial derivatives with respect to `(upper, lower, center, width)`.
    fn gradient(&self, x: f64) -> [f64; 4] {
        let w = self.width.abs();
        let s = 1.0 / (1.0 + (-(x - self.center) / w).exp());
        let ds = s * (1.0 - s);
        let span = self.upper - self.lower;
        let dw = -span * ds * (x - self.center) / (w * w) * self.width.signum();
        [s, 1.0 - s, -span * ds / w, dw]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum LogisticMode {
    #[default]
    Identity,
    Fixed(Logistic4),
    /// Least-squares fit against a target vector.
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearized {
    pub values: Vec<f64>,
    pub params: Option<Logistic4>,
    /// The fit did not converge and the identity was used instead.
    pub fell_back: bool,
}

pub fn logistic_linearize(values: &[f64], mode: &LogisticMode, target: Option<&[f64]>) -> Result<Linearized> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("logistic input must be finite".into()));
    }
    let apply = |l: Logistic4| Linearized {
        values: values.iter().map(|&x| l.eval(x)).collect(),
        params: Some(l),
        fell_back: false,
    };
    match mode {
        LogisticMode::Identity => Ok(Linearized {
            values: values.to_vec(),
            params: None,
            fell_back: false,
        }),
        LogisticMode::Fixed(l) => Ok(apply(*l)),
        LogisticMode::Fit => {
            let target = target.ok_or_else(|| Error::InvalidArgument("logistic fit needs a target".into()))?;
            match fit_logistic(values, target) {
                Ok(l) => Ok(apply(l)),
                Err(Error::Domain(_)) => Ok(Linearized {
                    values: values.to_vec(),
                    params: None,
                    fell_back: true,
                }),
                Err(e) => Err(e),
            }
        }
    }
}

/// Levenberg-Marquardt least squares of `y` on `f(x)`. Returns a domain
/// error when the fit does not converge.
pub fn fit_logistic(x: &[f64], y: &[f64]) -> Result<Logistic4> {
    check_pair(x, y, 5)?;
    let (sxx, _, sxy) = moments(x, y);
    if sxx == 0.0 {
        return Err(Error::Domain("logistic fit needs a non-constant predictor".into()));
    }
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (upper, lower) = if sxy >= 0.0 { (hi, lo) } else { (lo, hi) };
    let mut cur = Logistic4 {
        upper,
        lower,
        center: mean(x),
        width: (sxx / x.len() as f64).sqrt() / 2.0,
    };
    let sse = |l: &Logistic4| x.iter().zip(y).map(|(a, b)| (b - l.eval(*a)).powi(2)).sum::<f64>();
    let mut err = sse(&cur);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (a, b) in x.iter().zip(y) {
            let g = cur.gradient(*a);
            let r = b - cur.eval(*a);
            for i in 0..4 {
                jtr[i] += g[i] * r;
                for j in 0..4 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            if let Some(step) = solve4(m, jtr) {
                let p = cur.params();
                let trial = Logistic4::from_params(std::array::from_fn(|i| p[i] + step[i]));
                let e = sse(&trial);
                if e.is_finite() && e <= err {
                    let done = err - e <= 1e-12 * err.max(1e-300) || step.iter().all(|s| s.abs() < 1e-12);
                    cur = trial;
                    err = e;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    if done {
                        return finish(cur);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left: a stationary point
            return finish(cur);
        }
    }
    Err(Error::Domain("logistic fit did not converge".into()))
}

fn finish(l: Logistic4) -> Result<Logistic4> {
    if l.params().iter().all(|v| v.is_finite()) && l.width != 0.0 {
        Ok(l)
    } else {
        Err(Error::Domain("logistic fit diverged".into()))
    }
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot = a[col];
            for (v, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - s) / a[row][row];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::linfit_eval;

    #[test]
    fn identity_mode_returns_input() {
        let v = [3.0, -1.0, 2.5];
        let out = logistic_linearize(&v, &LogisticMode::Identity, None).unwrap();
        assert_eq!(out.values, v);
    }

    #[test]
    fn midpoint_maps_to_center() {
        let l = Logistic4 {
            upper: 10.0,
            lower: -2.0,
            center: 1.5,
            width: 0.7,
        };
        assert_eq!(l.eval(1.5), 4.0);
    }

    #[test]
    fn fit_recovers_a_logistic() {
        let truth = Logistic4 {
            upper: 30.0,
            lower: -10.0,
            center: 2.0,
            width: 0.8,
        };
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        for &v in &x {
            assert!((fit.eval(v) - truth.eval(v)).abs() < 1e-6);
        }
        let lin = logistic_linearize(&x, &LogisticMode::Fit, Some(&y)).unwrap();
        assert!(linfit_eval(&lin.values, &y).unwrap().r2 >= linfit_eval(&x, &y).unwrap().r2);
    }

    #[test]
    fn constant_predictor_falls_back() {
        let out = logistic_linearize(&[1.0; 6], &LogisticMode::Fit, Some(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        assert!(out.fell_back && out.values == vec![1.0; 6]);
    }
}
