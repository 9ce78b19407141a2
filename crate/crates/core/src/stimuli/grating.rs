use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub const DEFAULT_MEAN_LEVEL: f64 = 127.5;

/// Log-spaced contrast grid; includes 0.18 and 1.
pub fn default_contrasts() -> Vec<f64> {
    vec![0.01, 0.018, 0.032, 0.056, 0.1, 0.18, 0.32, 0.56, 1.0]
}

/// Spatial frequencies in cycles per image width; includes 12 and 75.
pub fn default_frequencies() -> Vec<f64> {
    vec![3.0, 6.0, 12.0, 24.0, 48.0, 75.0, 96.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GratingSpec {
    pub contrast: f64,
    /// Cycles per image width.
    pub frequency: f64,
    /// Radians; 0 modulates along x.
    pub orientation: f64,
    pub phase: f64,
    pub mean_level: f64,
}

impl GratingSpec {
    pub fn new(contrast: f64, frequency: f64, orientation: f64, phase: f64) -> Self {
        Self {
            contrast,
            frequency,
            orientation,
            phase,
            mean_level: DEFAULT_MEAN_LEVEL,
        }
    }

    /// Uniform field at the mean level.
    pub fn gray() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// `mean * (1 + contrast * sin(2 pi f u / width + phase))` with `u` the
/// pixel coordinate projected on the orientation axis.
pub fn render_grating(spec: &GratingSpec, width: usize, height: usize, channels: usize) -> Result<ImagePlane> {
    if !(0.0..=1.0).contains(&spec.contrast) {
        return Err(Error::InvalidArgument(format!(
            "grating contrast must lie in [0, 1], got {}",
            spec.contrast
        )));
    }
    if !spec.frequency.is_finite() || spec.frequency < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "grating frequency must be finite and >= 0, got {}",
            spec.frequency
        )));
    }
    let m = spec.mean_level;
    if m.is_nan() || m < 0.0 || m * (1.0 + spec.contrast) > 255.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "mean level {m} with contrast {} leaves the [0, 255] range",
            spec.contrast
        )));
    }
    let mut img = ImagePlane::zeros(width, height, 1);
    let (s, c) = spec.orientation.sin_cos();
    let k = std::f64::consts::TAU * spec.frequency / width as f64;
    for y in 0..height {
        for x in 0..width {
            let u = x as f64 * c + y as f64 * s;
            let v = m * (1.0 + spec.contrast * (k * u + spec.phase).sin());
            img.set(0, y, x, v.clamp(0.0, 255.0));
        }
    }
    img.with_channels(channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_contrast_is_uniform() {
        let g = render_grating(&GratingSpec::new(0.0, 12.0, 0.4, 1.0), 16, 9, 1).unwrap();
        assert!(g.data().iter().all(|&v| v == DEFAULT_MEAN_LEVEL));
    }

    #[test]
    fn full_contrast_spans_range() {
        // quarter-period sampling hits the extrema exactly
        let g = render_grating(&GratingSpec::new(1.0, 16.0, 0.0, 0.0), 64, 4, 1).unwrap();
        let lo = g.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((0.0..=1.0).contains(&lo));
        assert!((254.0..=255.0).contains(&hi));
    }

    #[test]
    fn rgb_replication() {
        let g = render_grating(&GratingSpec::new(0.5, 3.0, 1.0, 0.2), 8, 8, 3).unwrap();
        assert_eq!(g.channels(), 3);
        assert_eq!(g.plane(0), g.plane(2));
    }

    #[test]
    fn rejects_bad_contrast() {
        assert!(render_grating(&GratingSpec::new(1.2, 3.0, 0.0, 0.0), 8, 8, 1).is_err());
        assert!(render_grating(&GratingSpec::new(-0.1, 3.0, 0.0, 0.0), 8, 8, 1).is_err());
    }

    #[test]
    fn full_period_mean() {
        let g = render_grating(&GratingSpec::new(0.8, 5.0, 0.0, 0.7), 40, 10, 1).unwrap();
        let mean = g.data().iter().sum::<f64>() / g.data().len() as f64;
        assert!((mean - DEFAULT_MEAN_LEVEL).abs() < 0.5);
    }
}
