use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::{ImagePlane, Rect};
use crate::seed;

/// Level sentinel meaning "no noise".
pub const NOISE_DISABLED: f64 = f64::NEG_INFINITY;

/// Noise standard deviation for a level in dB relative to the mean pixel
/// value `mean_level` of the perturbed region: `T * 10^(dB / 20)`.
pub fn db_to_std(level_db: f64, mean_level: f64) -> Result<f64> {
    check_mean_level(mean_level)?;
    if level_db.is_nan() || level_db == f64::INFINITY {
        return Err(Error::Domain(format!("noise level {level_db} dB is not usable")));
    }
    Ok(mean_level * 10f64.powf(level_db / 20.0))
}

/// Inverse of [`db_to_std`]; a zero standard deviation maps to the
/// disabled sentinel.
pub fn std_to_db(std: f64, mean_level: f64) -> Result<f64> {
    check_mean_level(mean_level)?;
    if !std.is_finite() || std < 0.0 {
        return Err(Error::Domain(format!("noise std must be finite and >= 0, got {std}")));
    }
    Ok(20.0 * (std / mean_level).log10())
}

fn check_mean_level(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Domain(format!(
            "mean pixel value over the noise region must be positive (got {t}); \
             the region is entirely black"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Flat amplitude spectrum with uniformly random phases.
    #[default]
    RandomPhase,
    /// White Gaussian samples.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub region: Rect,
    pub level_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: NoiseMode,
}

impl NoiseSpec {
    pub fn new(region: Rect, level_db: f64, seed: u64) -> Self {
        Self {
            region,
            level_db,
            seed,
            mode: NoiseMode::RandomPhase,
        }
    }

    pub fn with_mode(mut self, mode: NoiseMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn is_disabled(&self) -> bool {
        self.level_db == NOISE_DISABLED
    }
}

/// Additive field on a `width`x`height` single-channel plane, zero outside
/// the region. Inside, the field has exactly zero mean and the standard
/// deviation `db_to_std(level_db, mean_level)`.
pub fn synth_noise(spec: &NoiseSpec, width: usize, height: usize, mean_level: f64) -> Result<ImagePlane> {
    let r = spec.region;
    if r.is_empty() {
        return Err(Error::InvalidArgument("noise region is empty".into()));
    }
    if !r.fits_in(width, height) {
        return Err(Error::Geometry(format!(
            "noise region {r:?} exceeds the {width}x{height} image"
        )));
    }
    let target_std = db_to_std(spec.level_db, mean_level)?;
    let mut field = ImagePlane::zeros(width, height, 1);
    if target_std == 0.0 {
        return Ok(field);
    }
    if r.area() < 2 {
        return Err(Error::InvalidArgument(
            "noise region must hold at least two pixels to carry a zero-mean field".into(),
        ));
    }

    let mut rng = seed::rng(spec.seed);
    let mut values = match spec.mode {
        NoiseMode::RandomPhase => random_phase_field(r.height, r.width, &mut rng),
        NoiseMode::Gaussian => (0..r.area()).map(|_| StandardNormal.sample(&mut rng)).collect(),
    };
    normalize(&mut values, target_std);

    for row in 0..r.height {
        for col in 0..r.width {
            field.set(0, r.y + row, r.x + col, values[row * r.width + col]);
        }
    }
    Ok(field)
}

/// Real field whose spectrum has unit amplitude at every non-DC bin and
/// uniformly random, Hermitian-paired phases.
fn random_phase_field(rows: usize, cols: usize, rng: &mut seed::Rng) -> Vec<f64> {
    let n = rows * cols;
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for u in 0..rows {
        for v in 0..cols {
            let i = u * cols + v;
            let j = ((rows - u) % rows) * cols + (cols - v) % cols;
            if i == 0 {
                continue;
            }
            if i == j {
                // self-conjugate bin: the value must be real
                spec[i] = Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0);
            } else if i < j {
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let z = Complex64::from_polar(1.0, phase);
                spec[i] = z;
                spec[j] = z.conj();
            }
        }
    }
    let plan = Fft2::new(rows, cols);
    let mut scratch = Vec::new();
    plan.inverse(&mut spec, &mut scratch);
    spec.into_iter().map(|z| z.re).collect()
}

fn normalize(values: &mut [f64], target_std: f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= mean;
    }
    let std = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let scale = target_std / std;
    for v in values.iter_mut() {
        *v *= scale;
    }
    // remove the residual rounding offset left by the rescale
    let mean = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= mean;
    }
}

/// Adds a single-channel field to every channel of `image` and clamps to
/// the displayable range.
pub fn apply_field(image: &ImagePlane, field: &ImagePlane) -> Result<ImagePlane> {
    if field.channels() != 1 || field.width() != image.width() || field.height() != image.height() {
        return Err(Error::InvalidArgument(format!(
            "field {}x{}x{} does not match image {}x{}",
            field.width(),
            field.height(),
            field.channels(),
            image.width(),
            image.height()
        )));
    }
    let mut out = image.clone();
    let n = image.width() * image.height();
    let f = field.data();
    for c in 0..image.channels() {
        for (v, d) in out.data_mut()[c * n..(c + 1) * n].iter_mut().zip(f) {
            *v = (*v + d).clamp(0.0, 255.0);
        }
    }
    Ok(out)
}

/// Adds noise of the requested level inside the region. The reference
/// level `T` is the mean pixel value of `image` over the region.
pub fn perturb_image(image: &ImagePlane, spec: &NoiseSpec) -> Result<ImagePlane> {
    if !spec.region.fits_in(image.width(), image.height()) || spec.region.is_empty() {
        return Err(Error::Geometry(format!(
            "noise region {:?} is empty or exceeds the {}x{} image",
            spec.region,
            image.width(),
            image.height()
        )));
    }
    if spec.is_disabled() {
        return Ok(image.clone());
    }
    let t = image.region_mean(&spec.region);
    let field = synth_noise(spec, image.width(), image.height(), t)?;
    apply_field(image, &field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_examples() {
        assert_eq!(db_to_std(0.0, 37.0).unwrap(), 37.0);
        assert!((db_to_std(-20.0, 100.0).unwrap() - 10.0).abs() < 1e-12);
        // 20 * log10(2) = 6.020599913279624
        assert!((std_to_db(2.0 * 50.0, 50.0).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
        assert_eq!(db_to_std(NOISE_DISABLED, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn black_region_is_a_domain_error() {
        assert!(matches!(db_to_std(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(std_to_db(1.0, -3.0), Err(Error::Domain(_))));
        let img = ImagePlane::zeros(8, 8, 1);
        let spec = NoiseSpec::new(Rect::new(2, 2, 4, 4), 0.0, 1);
        assert!(matches!(perturb_image(&img, &spec), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_region_rejected() {
        let spec = NoiseSpec::new(Rect::new(0, 0, 0, 3), 0.0, 1);
        assert!(synth_noise(&spec, 8, 8, 100.0).is_err());
    }

    #[test]
    fn field_is_zero_outside_region_and_centered_inside() {
        let region = Rect::new(3, 2, 10, 7);
        let spec = NoiseSpec::new(region, -6.0, 99);
        let f = synth_noise(&spec, 16, 12, 80.0).unwrap();
        let target = db_to_std(-6.0, 80.0).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                if !region.contains(x, y) {
                    assert_eq!(f.get(0, y, x), 0.0);
                }
            }
        }
        assert!(f.region_mean(&region).abs() <= 1e-9 * target);
        assert!((f.region_std(&region) / target - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_phase_spectrum_is_flat() {
        let f = random_phase_field(6, 8, &mut seed::rng(5));
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Fft2::new(6, 8).forward(&mut buf, &mut Vec::new());
        assert!(buf[0].norm() < 1e-12);
        for z in &buf[1..] {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_examples() {
        let img = ImagePlane::filled(6, 6, 1, 100.0);
        let mut field = ImagePlane::zeros(6, 6, 1);
        field.set(0, 2, 3, 5.0);
        let out = apply_field(&img, &field).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let want = if (y, x) == (2, 3) { 105.0 } else { 100.0 };
                assert_eq!(out.get(0, y, x), want);
            }
        }

        let bright = ImagePlane::filled(2, 1, 1, 250.0);
        let mut f = ImagePlane::zeros(2, 1, 1);
        f.set(0, 0, 0, 20.0);
        assert_eq!(apply_field(&bright, &f).unwrap().get(0, 0, 0), 255.0);

        let spec = NoiseSpec::new(Rect::new(1, 1, 3, 3), NOISE_DISABLED, 4);
        assert_eq!(perturb_image(&img, &spec).unwrap(), img);
    }

    #[test]
    fn gaussian_mode_normalized_too() {
        let region = Rect::new(0, 0, 32, 32);
        let spec = NoiseSpec::new(region, 0.0, 3).with_mode(NoiseMode::Gaussian);
        let f = synth_noise(&spec, 32, 32, 12.0).unwrap();
        assert!((f.region_std(&region) - 12.0).abs() < 1e-9);
    }
}
