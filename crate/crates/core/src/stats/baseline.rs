use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::{ImagePlane, Rect};
use crate::seed::derive_seed;
use crate::stimuli::{perturb_image, NoiseMode, NoiseSpec};

/// Image-statistic predictors of masking thresholds. These are simple
/// stand-ins for the classic baselines, not reproductions of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePredictors {
    /// Region std over region mean.
    pub rms_contrast: f64,
    /// Region std relative to a reference noise std, in dB.
    pub snr_db: f64,
    /// Mean absolute amplitude-spectrum change of the region, averaged over
    /// the noise levels.
    pub spectral_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    pub levels_db: Vec<f64>,
    /// Pixel-value std taken as 0 dB.
    pub reference_std: f64,
    pub seed: u64,
    pub mode: NoiseMode,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            levels_db: crate::metrics::default_levels_db(),
            reference_std: 1.0,
            seed: 0,
            mode: NoiseMode::RandomPhase,
        }
    }
}

/// Floor applied to the region std before taking the SNR logarithm.
const SNR_FLOOR: f64 = 1e-6;

pub fn baseline_predictors(image: &ImagePlane, region: &Rect, opts: &BaselineOptions) -> Result<BaselinePredictors> {
    if region.is_empty() || !region.fits_in(image.width(), image.height()) {
        return Err(Error::Geometry(format!(
            "region {region:?} is empty or outside the image"
        )));
    }
    if opts.reference_std.is_nan() || opts.reference_std <= 0.0 {
        return Err(Error::Domain("reference noise std must be positive".into()));
    }
    let mean = image.region_mean(region);
    let std = image.region_std(region);
    let rms_contrast = if std == 0.0 { 0.0 } else { std / mean };
    let snr_db = 20.0 * (std.max(SNR_FLOOR * opts.reference_std) / opts.reference_std).log10();

    let clean = amplitude_spectrum(image, region);
    let mut change = 0.0;
    for (li, &level) in opts.levels_db.iter().enumerate() {
        let spec = NoiseSpec::new(*region, level, derive_seed(opts.seed, &[li as u64])).with_mode(opts.mode);
        let noisy = amplitude_spectrum(&perturb_image(image, &spec)?, region);
        change += clean.iter().zip(&noisy).map(|(a, b)| (a - b).abs()).sum::<f64>() / clean.len() as f64;
    }
    if !opts.levels_db.is_empty() {
        change /= opts.levels_db.len() as f64;
    }
    Ok(BaselinePredictors {
        rms_contrast,
        snr_db,
        spectral_change: change,
    })
}

/// Magnitude of the 2-D DFT of the channel-mean region, divided by the
/// pixel count.
fn amplitude_spectrum(image: &ImagePlane, r: &Rect) -> Vec<f64> {
    let c = image.channels();
    let mut buf: Vec<Complex64> = (0..r.area())
        .map(|i| {
            let (y, x) = (r.y + i / r.width, r.x + i % r.width);
            Complex64::new((0..c).map(|ch| image.get(ch, y, x)).sum::<f64>() / c as f64, 0.0)
        })
        .collect();
    Fft2::new(r.height, r.width).forward(&mut buf, &mut Vec::new());
    let n = r.area() as f64;
    buf.iter().map(|z| z.norm() / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimuli::NOISE_DISABLED;

    fn textured() -> ImagePlane {
        ImagePlane::from_data(16, 16, 1, (0..256).map(|i| 40.0 + ((i * 37) % 101) as f64).collect()).unwrap()
    }

    #[test]
    fn uniform_image_has_zero_contrast() {
        let img = ImagePlane::filled(8, 8, 1, 90.0);
        let p = baseline_predictors(&img, &Rect::centered_half(8, 8), &BaselineOptions::default()).unwrap();
        assert_eq!(p.rms_contrast, 0.0);
    }

    #[test]
    fn contrast_is_scale_invariant() {
        let a = textured();
        let b = ImagePlane::from_data(16, 16, 1, a.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let r = Rect::centered_half(16, 16);
        let o = BaselineOptions::default();
        let (pa, pb) = (
            baseline_predictors(&a, &r, &o).unwrap(),
            baseline_predictors(&b, &r, &o).unwrap(),
        );
        assert!((pa.rms_contrast - pb.rms_contrast).abs() < 1e-12);
    }

    #[test]
    fn no_noise_means_no_spectral_change() {
        let o = BaselineOptions {
            levels_db: vec![NOISE_DISABLED; 3],
            ..Default::default()
        };
        let p = baseline_predictors(&textured(), &Rect::centered_half(16, 16), &o).unwrap();
        assert_eq!(p.spectral_change, 0.0);
    }
}
