use std::f64::consts::{FRAC_PI_2, PI};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Kernel2d;
use crate::error::{Error, Result};
use crate::fft::Fft2;

/// Undecimated real steerable pyramid built in the frequency domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidParams {
    pub scales: usize,
    pub orientations: usize,
    /// Width of each raised-cosine radial transition in octaves.
    pub transition_octaves: f64,
}

impl Default for PyramidParams {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 4,
            transition_octaves: 1.0,
        }
    }
}

impl PyramidParams {
    pub fn band_count(&self) -> usize {
        self.scales * self.orientations + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 {
            return Err(Error::InvalidArgument(
                "pyramid needs at least one scale and one orientation".into(),
            ));
        }
        if !(self.transition_octaves > 0.0 && self.transition_octaves <= 1.0) {
            return Err(Error::Domain(format!(
                "transition width must be in (0, 1] octaves, got {}",
                self.transition_octaves
            )));
        }
        Ok(())
    }

    /// Normalization making the squared angular windows sum to one.
    fn angular_gain(&self) -> f64 {
        let n = self.orientations - 1;
        let mut binom = 1.0;
        for j in 0..n {
            binom *= (2 * n - j) as f64 / (j + 1) as f64;
        }
        (4f64.powi(n as i32) / (self.orientations as f64 * binom)).sqrt()
    }
}

/// Raised-cosine pair across the band edge at `log2(rho) = edge`:
/// returns `(high, low)` with `high^2 + low^2 = 1`.
fn raised_cosine(log_rho: f64, edge: f64, width: f64) -> (f64, f64) {
    let t = ((edge - log_rho) / width).clamp(0.0, 1.0);
    ((FRAC_PI_2 * t).cos(), (FRAC_PI_2 * t).sin())
}

/// Frequency responses of every band on a `rows`x`cols` DFT grid, ordered
/// highpass, then scale-major oriented bands, then lowpass. Radial
/// frequency is in units of the Nyquist frequency.
pub fn pyramid_responses(params: &PyramidParams, rows: usize, cols: usize) -> Result<Vec<Vec<Complex64>>> {
    params.validate()?;
    let k = params.orientations;
    let gain = params.angular_gain();
    let w = params.transition_octaves;
    // (-i)^(K-1) keeps the spatial kernels real.
    let rot = match (k - 1) % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    };
    let freq = |i: usize, n: usize| {
        let s = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        2.0 * s / n as f64
    };
    let mut bands = vec![vec![Complex64::new(0.0, 0.0); rows * cols]; params.band_count()];
    for r in 0..rows {
        let fy = freq(r, rows);
        for c in 0..cols {
            let fx = freq(c, cols);
            let idx = r * cols + c;
            let rho = (fx * fx + fy * fy).sqrt();
            let log_rho = if rho > 0.0 { rho.log2() } else { f64::NEG_INFINITY };
            let theta = fy.atan2(fx);
            let (hi0, lo0) = raised_cosine(log_rho, 0.0, w);
            bands[0][idx] = Complex64::new(hi0, 0.0);
            let mut lo = lo0;
            for s in 0..params.scales {
                let (h, l) = raised_cosine(log_rho, -(s as f64) - 1.0, w);
                let radial = lo * h;
                for o in 0..k {
                    let a = gain * (theta - PI * o as f64 / k as f64).cos().powi(k as i32 - 1);
                    bands[1 + s * k + o][idx] = rot * (radial * a);
                }
                lo *= l;
            }
            bands[params.band_count() - 1][idx] = Complex64::new(lo, 0.0);
        }
    }
    Ok(bands)
}

/// Spatial cross-correlation kernels of size `(2h-1)`x`(2w-1)` whose
/// same-padded response on an `h`x`w` image equals linear filtering with
/// the band's frequency response.
pub fn pyramid_kernels(params: &PyramidParams, height: usize, width: usize) -> Result<Vec<Kernel2d>> {
    let (rows, cols) = (2 * height - 1, 2 * width - 1);
    let fft = Fft2::new(rows, cols);
    let mut scratch = Vec::new();
    let (cy, cx) = (height - 1, width - 1);
    pyramid_responses(params, rows, cols)?
        .into_iter()
        .map(|mut spec| {
            fft.inverse(&mut spec, &mut scratch);
            let mut data = vec![0.0; rows * cols];
            for y in 0..rows {
                for x in 0..cols {
                    // w(m) = h(-m)
                    let sy = (rows + cy - y) % rows;
                    let sx = (cols + cx - x) % cols;
                    data[y * cols + x] = spec[sy * cols + sx].re;
                }
            }
            Ok(Kernel2d::new(rows, cols, data))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_gain_for_four_orientations() {
        let g = PyramidParams::default().angular_gain();
        assert!((g * g - 0.8).abs() < 1e-15);
    }

    #[test]
    fn responses_tile_the_plane() {
        for params in [
            PyramidParams::default(),
            PyramidParams {
                scales: 3,
                orientations: 6,
                transition_octaves: 0.5,
            },
        ] {
            let bands = pyramid_responses(&params, 31, 27).unwrap();
            for i in 0..31 * 27 {
                let p: f64 = bands.iter().map(|b| b[i].norm_sqr()).sum();
                assert!((p - 1.0).abs() < 1e-12, "{p}");
            }
        }
    }

    #[test]
    fn kernels_are_real() {
        let params = PyramidParams::default();
        let (rows, cols) = (15, 15);
        let fft = Fft2::new(rows, cols);
        let mut scratch = Vec::new();
        for mut b in pyramid_responses(&params, rows, cols).unwrap() {
            fft.inverse(&mut b, &mut scratch);
            assert!(b.iter().all(|v| v.im.abs() < 1e-12));
        }
    }
}
