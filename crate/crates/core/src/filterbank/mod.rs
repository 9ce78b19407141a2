//! Linear filter-bank baselines packaged as two-stage network graphs.
//!
//! Stage one (`linear`) holds the signed filter responses, one channel per
//! kernel, stride 1 and same padding. Stage two (`rectified`) is their
//! half-wave rectification and is the default metric tap.

mod gabor;
mod pyramid;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use gabor::{gabor_kernel, GaborParams};
pub use pyramid::{pyramid_kernels, pyramid_responses, PyramidParams};

use crate::engine::{Conv2d, GraphBuilder, NetworkGraph, Op, Preprocess, Shape};
use crate::error::Result;

pub const LINEAR_STAGE: &str = "linear";
pub const RECTIFIED_STAGE: &str = "rectified";
/// Input mean removed before filtering, so a mid-gray field maps to zero.
pub const BANK_MEAN_LEVEL: f64 = 127.5;

/// Odd-sized 2-D kernel in cross-correlation layout, centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Kernel2d {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Point reflection about the center.
    pub fn reflected(&self) -> Self {
        let mut data = self.data.clone();
        data.reverse();
        Self { data, ..*self }
    }

    /// Zero-pads symmetrically to a larger odd size.
    fn padded(&self, height: usize, width: usize) -> Self {
        let (oy, ox) = ((height - self.height) / 2, (width - self.width) / 2);
        let mut data = vec![0.0; height * width];
        for y in 0..self.height {
            let dst = (y + oy) * width + ox;
            data[dst..dst + self.width].copy_from_slice(&self.data[y * self.width..(y + 1) * self.width]);
        }
        Self::new(height, width, data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BankParams {
    Gabor(GaborParams),
    Pyramid(PyramidParams),
}

/// Builds a filter-bank graph for grayscale `height`x`width` inputs.
pub fn build_bank(params: &BankParams, height: usize, width: usize) -> Result<NetworkGraph> {
    match params {
        BankParams::Gabor(p) => build_gabor_bank(p, height, width),
        BankParams::Pyramid(p) => build_pyramid_bank(p, height, width),
    }
}

fn conv_node(kernels: &[Kernel2d]) -> Op {
    let (kh, kw) = (kernels[0].height, kernels[0].width);
    Op::Conv2d(Conv2d {
        out_channels: kernels.len(),
        in_channels: 1,
        kernel: (kh, kw),
        stride: (1, 1),
        pad: (kh / 2, kw / 2),
        groups: 1,
        weight: kernels.iter().flat_map(|k| k.data.iter().map(|&v| v as f32)).collect(),
        bias: Vec::new(),
    })
}

fn finish(mut b: GraphBuilder, linear_inputs: &[&str]) -> Result<NetworkGraph> {
    b.push(LINEAR_STAGE, Op::Concat, linear_inputs);
    b.push(RECTIFIED_STAGE, Op::Relu, &[LINEAR_STAGE]);
    b.build(Preprocess::mean_pixel(BANK_MEAN_LEVEL))?
        .with_default_taps(vec![RECTIFIED_STAGE.to_string()])
}

/// Channel order is sigma-major, then wavelength, orientation and phase.
/// Each sigma gets its own convolution node so small kernels stay small.
pub fn build_gabor_bank(params: &GaborParams, height: usize, width: usize) -> Result<NetworkGraph> {
    params.validate()?;
    let mut b = GraphBuilder::new("gabor-bank", Shape::new(1, height, width));
    let mut ids = Vec::new();
    for (si, &sigma) in params.sigmas.iter().enumerate() {
        let mut kernels = Vec::new();
        for &mult in &params.lambda_multipliers {
            let mut done: Vec<(f64, Vec<Kernel2d>)> = Vec::new();
            for &theta in &params.orientations {
                // Reuse exact reflections for orientations half a turn apart.
                let twin = done.iter().find(|(t, _)| {
                    let d = (theta - t - PI).rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d) < 1e-9
                });
                let ks: Vec<Kernel2d> = match twin {
                    Some((_, ks)) => ks.iter().map(Kernel2d::reflected).collect(),
                    None => params
                        .phases
                        .iter()
                        .map(|&phase| gabor_kernel(sigma, mult * sigma, theta, phase))
                        .collect::<Result<_>>()?,
                };
                kernels.extend(ks.iter().cloned());
                done.push((theta, ks));
            }
        }
        let side = kernels.iter().map(|k| k.height).max().unwrap_or(1);
        let kernels: Vec<Kernel2d> = kernels.iter().map(|k| k.padded(side, side)).collect();
        ids.push(b.push(format!("gabor_s{si}"), conv_node(&kernels), &["data"]));
    }
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    finish(b, &refs)
}

/// Channel order is highpass, scale-major oriented bands, lowpass.
pub fn build_pyramid_bank(params: &PyramidParams, height: usize, width: usize) -> Result<NetworkGraph> {
    let kernels = pyramid_kernels(params, height, width)?;
    let mut b = GraphBuilder::new("steerable-pyramid", Shape::new(1, height, width));
    b.push("bands", conv_node(&kernels), &["data"]);
    finish(b, &["bands"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{forward, ConvMode, ForwardOptions, LayerTap};
    use crate::stimuli::{render_grating, GratingSpec};
    use crate::ImagePlane;

    fn small_gabor() -> GaborParams {
        GaborParams {
            sigmas: vec![1.0, 2.0],
            ..GaborParams::default()
        }
    }

    #[test]
    fn gabor_bank_shape_and_taps() {
        let net = build_gabor_bank(&small_gabor(), 20, 24).unwrap();
        assert_eq!(net.shape_of(LINEAR_STAGE), Some(Shape::new(48, 20, 24)));
        assert_eq!(net.declared_default_taps().unwrap(), [RECTIFIED_STAGE]);
    }

    #[test]
    fn impulse_reproduces_flipped_kernels() {
        let p = small_gabor();
        let n = 31;
        let net = build_gabor_bank(&p, n, n).unwrap();
        let mut img = ImagePlane::filled(n, n, 1, BANK_MEAN_LEVEL);
        img.set(0, n / 2, n / 2, BANK_MEAN_LEVEL + 1.0);
        let snap = forward(&net, &img, &[LayerTap::new(LINEAR_STAGE)]).unwrap();
        let out = snap.get(LINEAR_STAGE).unwrap();
        let mut ch = 0;
        for &sigma in &p.sigmas {
            for &m in &p.lambda_multipliers {
                for &t in &p.orientations {
                    for &ph in &p.phases {
                        let k = gabor_kernel(sigma, m * sigma, t, ph).unwrap();
                        let r = k.height / 2;
                        for y in 0..k.height {
                            for x in 0..k.width {
                                let got = out[ch * n * n + (n / 2 + r - y) * n + (n / 2 + r - x)];
                                assert!((got - k.at(y, x)).abs() < 1e-6, "ch {ch}");
                            }
                        }
                        ch += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn preferred_orientation_wins() {
        let n = 48;
        let p = GaborParams {
            sigmas: vec![4.0],
            lambda_multipliers: vec![2.0],
            orientations: vec![0.0, PI / 2.0],
            phases: vec![0.0],
        };
        let net = build_gabor_bank(&p, n, n).unwrap();
        // wavelength 8 px
        let g = GratingSpec::new(0.5, n as f64 / 8.0, 0.0, 0.0);
        let img = render_grating(&g, n, n, 1).unwrap();
        let snap = forward(&net, &img, &[LayerTap::new(RECTIFIED_STAGE)]).unwrap();
        let v = snap.get(RECTIFIED_STAGE).unwrap();
        let sum = |c: usize| v[c * n * n..(c + 1) * n * n].iter().sum::<f64>();
        assert!(sum(0) > 10.0 * sum(1), "{} vs {}", sum(0), sum(1));
    }

    #[test]
    fn pyramid_kernels_tile_in_frequency() {
        let params = PyramidParams::default();
        let (h, w) = (16, 20);
        let kernels = pyramid_kernels(&params, h, w).unwrap();
        let (rows, cols) = (2 * h - 1, 2 * w - 1);
        let fft = crate::fft::Fft2::new(rows, cols);
        let mut scratch = Vec::new();
        let mut power = vec![0.0; rows * cols];
        for k in &kernels {
            let mut buf: Vec<_> = k
                .data
                .iter()
                .map(|&v| rustfft::num_complex::Complex64::new(v, 0.0))
                .collect();
            fft.forward(&mut buf, &mut scratch);
            for (p, v) in power.iter_mut().zip(&buf) {
                *p += v.norm_sqr();
            }
        }
        assert!(power.iter().all(|p| (p - 1.0).abs() < 0.02));
    }

    #[test]
    fn pyramid_bank_is_linear() {
        let n = 12;
        let net = build_pyramid_bank(&PyramidParams::default(), n, n).unwrap();
        let a = ImagePlane::from_data(n, n, 1, (0..n * n).map(|i| ((i * 37) % 255) as f64).collect()).unwrap();
        let b = ImagePlane::from_data(n, n, 1, (0..n * n).map(|i| ((i * 11) % 200) as f64).collect()).unwrap();
        let tap = [LayerTap::new(LINEAR_STAGE)];
        let opts = ForwardOptions {
            conv: ConvMode::Direct,
            ..Default::default()
        };
        let ra = crate::engine::forward_with(&net, &a, &tap, opts).unwrap();
        let rb = crate::engine::forward_with(&net, &b, &tap, opts).unwrap();
        let mix: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| 2.0 * (x - BANK_MEAN_LEVEL) - 0.5 * (y - BANK_MEAN_LEVEL) + BANK_MEAN_LEVEL)
            .collect();
        let rm = forward(&net, &ImagePlane::from_data(n, n, 1, mix).unwrap(), &tap).unwrap();
        let (va, vb, vm) = (
            ra.get(LINEAR_STAGE).unwrap(),
            rb.get(LINEAR_STAGE).unwrap(),
            rm.get(LINEAR_STAGE).unwrap(),
        );
        for i in 0..va.len() {
            let want = 2.0 * va[i] - 0.5 * vb[i];
            assert!((vm[i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }
}
