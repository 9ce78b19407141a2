use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::Kernel2d;
use crate::error::{Error, Result};

/// Multiscale Gabor grid; every composition of the four lists is one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaborParams {
    /// Envelope standard deviations in pixels.
    pub sigmas: Vec<f64>,
    /// Wavelengths as multiples of sigma.
    pub lambda_multipliers: Vec<f64>,
    /// Radians.
    pub orientations: Vec<f64>,
    /// Radians.
    pub phases: Vec<f64>,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self {
            sigmas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            lambda_multipliers: vec![1.0, 2.0],
            orientations: (0..6).map(|k| k as f64 * PI / 3.0).collect(),
            phases: vec![0.0, PI / 2.0],
        }
    }
}

impl GaborParams {
    pub fn kernel_count(&self) -> usize {
        self.sigmas.len() * self.lambda_multipliers.len() * self.orientations.len() * self.phases.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_count() == 0 {
            return Err(Error::InvalidArgument("Gabor grid is empty".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Domain("Gabor sigma must be positive".into()));
        }
        if self.lambda_multipliers.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("Gabor wavelength multiplier must be positive".into()));
        }
        if self.orientations.iter().chain(&self.phases).any(|v| !v.is_finite()) {
            return Err(Error::Domain("Gabor angles must be finite".into()));
        }
        Ok(())
    }
}

/// Gaussian envelope times a sinusoid, `exp(-r^2 / 2 sigma^2) *
/// cos(2 pi u / lambda + phase)` with `u = x cos(orientation) + y sin(orientation)`,
/// on a square support of radius `ceil(3 sigma)`.
///
/// The DC component is removed by subtracting a scaled envelope and the
/// result is normalized to unit L1 norm. Kernels that vanish on the pixel
/// grid are returned as exact zeros. Orientations in `[pi, 2 pi)` are built
/// as the point reflection of `orientation - pi`, so opposite orientations
/// give identical even kernels and negated odd kernels.
pub fn gabor_kernel(sigma: f64, lambda: f64, orientation: f64, phase: f64) -> Result<Kernel2d> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if !orientation.is_finite() || !phase.is_finite() {
        return Err(Error::Domain("orientation and phase must be finite".into()));
    }
    let theta = orientation.rem_euclid(TAU);
    if theta >= PI {
        return Ok(gabor_kernel(sigma, lambda, theta - PI, phase)?.reflected());
    }

    let r = (3.0 * sigma).ceil() as i64;
    let size = (2 * r + 1) as usize;
    let (s, c) = theta.sin_cos();
    // Quadrature phases get exact zeros so even kernels are exactly
    // symmetric and odd kernels exactly antisymmetric.
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let (ps, pc) = phase.sin_cos();
    let (ps, pc) = (snap(ps), snap(pc));
    let mut env = vec![0.0; size * size];
    let mut k = vec![0.0; size * size];
    for y in -r..=r {
        for x in -r..=r {
            let i = ((y + r) as usize) * size + (x + r) as usize;
            let (xf, yf) = (x as f64, y as f64);
            let g = (-(xf * xf + yf * yf) / (2.0 * sigma * sigma)).exp();
            let a = TAU * (xf * c + yf * s) / lambda;
            env[i] = g;
            k[i] = g * (a.cos() * pc - a.sin() * ps);
        }
    }
    let env_sum: f64 = env.iter().sum();
    let antisymmetric = k.iter().zip(k.iter().rev()).all(|(a, b)| *a == -*b);
    if !antisymmetric {
        let dc: f64 = k.iter().sum::<f64>() / env_sum;
        for (v, g) in k.iter_mut().zip(&env) {
            *v -= dc * g;
        }
    }
    let l1: f64 = k.iter().map(|v| v.abs()).sum();
    if l1 < 1e-9 * env_sum {
        k.fill(0.0);
    } else {
        for v in &mut k {
            *v /= l1;
        }
    }
    Ok(Kernel2d::new(size, size, k))
}
