//! Feed-forward inference over NWF v1 graphs with named layer taps.

mod forward;
mod graph;
pub mod kernels;
pub mod nwf;
mod pool;

use rand::seq::SliceRandom;

pub use forward::{
    default_taps, forward, forward_with, neuron_subset, softmax, ActivationSnapshot, AffineFamily, ConvMode,
    ForwardOptions, LayerTap,
};
pub use graph::{
    BatchNorm, Conv2d, FullyConnected, GraphBuilder, Lrn, NetworkGraph, Node, Op, Pool, Preprocess, Shape,
};
pub use nwf::{from_bytes, load_network, save_network, to_bytes};

use crate::error::Result;
use crate::seed::{derive_seed, rng};

/// Permutes every convolution and fully-connected layer's weights
/// uniformly within the layer, and its biases separately.
pub fn scramble_weights(net: &NetworkGraph, seed: u64) -> Result<NetworkGraph> {
    net.map_nodes(|i, n| {
        let mut n = n.clone();
        let (w, b) = match &mut n.op {
            Op::Conv2d(c) => (&mut c.weight, &mut c.bias),
            Op::FullyConnected(f) => (&mut f.weight, &mut f.bias),
            _ => return n,
        };
        w.shuffle(&mut rng(derive_seed(seed, &[i as u64, 0])));
        b.shuffle(&mut rng(derive_seed(seed, &[i as u64, 1])));
        n
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ImagePlane;

    fn conv(out: usize, inp: usize, k: usize, pad: usize, weight: Vec<f32>, bias: Vec<f32>) -> Op {
        Op::Conv2d(Conv2d {
            out_channels: out,
            in_channels: inp,
            kernel: (k, k),
            stride: (1, 1),
            pad: (pad, pad),
            groups: 1,
            weight,
            bias,
        })
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[1.0; 4]), vec![0.25; 4]);
        let p = softmax(&[0.0, 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let q = softmax(&[1000.0, 1000.0 + 3f64.ln()]);
        assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn identity_conv_and_data_tap() {
        let mut b = GraphBuilder::new("id", Shape::new(3, 5, 4));
        let mut w = vec![0.0; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        b.push("conv", conv(3, 3, 1, 0, w, vec![0.0; 3]), &["data"]);
        let net = b.build(Preprocess::mean_pixel(10.0)).unwrap();
        let img = ImagePlane::from_data(4, 5, 3, (0..60).map(|v| v as f64).collect()).unwrap();
        let snap = forward(&net, &img, &default_taps(&net)).unwrap();
        let data = snap.get("data").unwrap();
        assert!(data.iter().zip(img.data()).all(|(a, b)| *a == b - 10.0));
        assert_eq!(snap.get("conv").unwrap(), data);
    }

    #[test]
    fn input_mismatch_names_data() {
        let mut b = GraphBuilder::new("id", Shape::new(1, 4, 4));
        b.push("r", Op::Relu, &["data"]);
        let net = b.build(Preprocess::default()).unwrap();
        let err = forward(&net, &ImagePlane::zeros(5, 4, 1), &default_taps(&net)).unwrap_err();
        assert!(err.to_string().contains("`data`"), "{err}");
    }

    #[test]
    fn fft_path_matches_direct() {
        let (k, inp, out) = (9, 4, 6);
        for groups in [1, 2] {
            let per = inp / groups * k * k;
            let mut weight: Vec<f32> = (0..out * per).map(|i| (i * 7919 % 211) as f32 / 105.0 - 1.0).collect();
            // channel 1 repeats channel 0 negated, channel 5 is all zero
            for j in 0..per {
                weight[per + j] = -weight[j];
                weight[5 * per + j] = 0.0;
            }
            for &(h, w, stride, pad) in &[(12, 10, 1, 4), (11, 13, 2, 3), (6, 7, 1, 8), (16, 16, 3, 0)] {
                let c = Conv2d {
                    out_channels: out,
                    in_channels: inp,
                    kernel: (k, k),
                    stride: (stride, stride),
                    pad: (pad, pad),
                    groups,
                    weight: weight.clone(),
                    bias: vec![0.5, -1.0, 0.0, 2.0, 0.25, 3.0],
                };
                let xs = Shape::new(inp, h, w);
                let oh = (h + 2 * pad - k) / stride + 1;
                let ow = (w + 2 * pad - k) / stride + 1;
                let ys = Shape::new(out, oh, ow);
                let x: Vec<f64> = (0..xs.len()).map(|i| ((i * 31 % 17) as f64) - 8.0).collect();
                let direct = kernels::conv2d_direct(&c, &x, xs, ys);
                let plan = kernels::FftConvPlan::new(&c, xs, ys);
                assert_eq!(plan.unique_kernels(), 4);
                let fft = plan.apply(&c, &x, xs, ys);
                for (a, b) in direct.iter().zip(&fft) {
                    assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn partial_evaluation_matches_full() {
        let k = 7;
        let w = |out: usize, inp: usize, salt: usize| -> Vec<f32> {
            (0..out * inp * k * k)
                .map(|i| ((i + salt) * 7919 % 211) as f32 / 105.0 - 1.0)
                .collect()
        };
        let mut b = GraphBuilder::new("mix", Shape::new(3, 14, 13));
        b.push("a", conv(4, 3, k, 3, w(4, 3, 0), vec![0.1; 4]), &["data"]);
        b.push("b", conv(4, 3, k, 3, w(4, 3, 5), vec![-0.2; 4]), &["data"]);
        b.push("sum", Op::Add, &["a", "b"]);
        b.push(
            "bn",
            Op::BatchNorm(BatchNorm {
                mean: vec![0.5, 0.0, -1.0, 2.0],
                var: vec![1.0, 4.0, 0.25, 2.0],
                gamma: vec![1.0, -2.0, 0.5, 1.5],
                beta: vec![0.0, 1.0, -1.0, 0.3],
                eps: 1e-5,
            }),
            &["sum"],
        );
        b.push("cat", Op::Concat, &["bn", "a", "data"]);
        b.push("out", Op::Relu, &["cat"]);
        let net = b.build(Preprocess::default()).unwrap();
        let img = ImagePlane::from_data(13, 14, 3, (0..546).map(|i| ((i * 37) % 101) as f64 - 50.0).collect()).unwrap();
        let taps = [LayerTap::new("out"), LayerTap::new("a")];
        for conv in [ConvMode::Direct, ConvMode::Fft] {
            let full = forward_with(
                &net,
                &img,
                &taps,
                ForwardOptions {
                    conv,
                    max_neurons_per_tap: None,
                },
            )
            .unwrap();
            for max in [1, 37, 500, 2000] {
                let part = forward_with(
                    &net,
                    &img,
                    &taps,
                    ForwardOptions {
                        conv,
                        max_neurons_per_tap: Some(max),
                    },
                )
                .unwrap();
                for ((_, f), (_, p)) in full.taps.iter().zip(&part.taps) {
                    let want: Vec<f64> = neuron_subset(f.len(), max).into_iter().map(|i| f[i]).collect();
                    assert_eq!(p, &want, "{conv:?} max {max}");
                }
            }
        }
    }

    #[test]
    fn scramble_preserves_multisets() {
        let w: Vec<f32> = (0..27).map(|i| i as f32).collect();
        let mut b = GraphBuilder::new("s", Shape::new(3, 4, 4));
        b.push("c1", conv(1, 3, 3, 1, w.clone(), vec![7.0]), &["data"]);
        let net = b.build(Preprocess::default()).unwrap();
        let s1 = scramble_weights(&net, 5).unwrap();
        let s2 = scramble_weights(&net, 5).unwrap();
        assert_eq!(s1.nodes(), s2.nodes());
        let Op::Conv2d(c) = &s1.nodes()[1].op else { panic!() };
        assert_ne!(c.weight, w);
        let mut sorted = c.weight.clone();
        sorted.sort_by(f32::total_cmp);
        assert_eq!(sorted, w);
        assert_eq!(c.bias, vec![7.0]);
    }
}
