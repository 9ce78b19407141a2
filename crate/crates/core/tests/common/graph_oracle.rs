//! Random small graphs and a naive nested-loop reference evaluator.

#![allow(dead_code)]

use percept_core::engine::{
    BatchNorm, Conv2d, FullyConnected, GraphBuilder, LayerTap, Lrn, NetworkGraph, Op, Pool, Preprocess, Shape,
};
use percept_core::ImagePlane;
use rand::seq::IndexedRandom;
use rand::Rng;

pub struct Case {
    pub net: NetworkGraph,
    pub image: ImagePlane,
    pub taps: Vec<LayerTap>,
}

fn uniform(r: &mut impl Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

fn window_ok(len: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (len + 2 * p >= k).then(|| (len + 2 * p - k) / s + 1)
}

/// A random graph of up to `max_ops` operations on an input of at most
/// 4x16x16, with every node tapped.
pub fn random_case(r: &mut impl Rng, max_ops: usize) -> Case {
    let input = Shape::new(
        *[1, 3].choose(r).unwrap(),
        r.random_range(1..=16),
        r.random_range(1..=16),
    );
    let mut b = GraphBuilder::new("random", input);
    let mut nodes: Vec<(String, Shape)> = vec![("data".into(), input)];
    let ops = r.random_range(1..=max_ops);
    let mut made = 0;
    let mut used: Vec<String> = Vec::new();
    while made < ops {
        let (src, xs) = nodes.choose(r).unwrap().clone();
        let id = format!("n{made}");
        let op = match r.random_range(0..11) {
            0 | 1 => {
                let k = r.random_range(1..=5);
                let pad = r.random_range(0..k);
                let stride = r.random_range(1..=3);
                let (Some(h), Some(w)) = (
                    window_ok(xs.height, k, stride, pad),
                    window_ok(xs.width, k, stride, pad),
                ) else {
                    continue;
                };
                let groups = *divisors(xs.channels).choose(r).unwrap();
                let out = groups * r.random_range(1..=(4 / groups).max(1));
                let _ = (h, w);
                Op::Conv2d(Conv2d {
                    out_channels: out,
                    in_channels: xs.channels,
                    kernel: (k, k),
                    stride: (stride, stride),
                    pad: (pad, pad),
                    groups,
                    weight: uniform(r, out * xs.channels / groups * k * k, -1.0, 1.0),
                    bias: if r.random_bool(0.7) {
                        uniform(r, out, -1.0, 1.0)
                    } else {
                        Vec::new()
                    },
                })
            }
            2 => {
                if xs.len() > 1024 {
                    continue;
                }
                let out = r.random_range(1..=6);
                Op::FullyConnected(FullyConnected {
                    out_features: out,
                    in_features: xs.len(),
                    weight: uniform(r, out * xs.len(), -0.2, 0.2),
                    bias: if r.random_bool(0.5) {
                        uniform(r, out, -1.0, 1.0)
                    } else {
                        Vec::new()
                    },
                })
            }
            3 => Op::Relu,
            4 | 5 => {
                let k = r.random_range(1..=3);
                let pad = r.random_range(0..k);
                let stride = r.random_range(1..=3);
                if window_ok(xs.height, k, stride, pad).is_none() || window_ok(xs.width, k, stride, pad).is_none() {
                    continue;
                }
                let p = Pool {
                    kernel: (k, k),
                    stride: (stride, stride),
                    pad: (pad, pad),
                };
                if r.random_bool(0.5) {
                    Op::MaxPool(p)
                } else {
                    Op::AvgPool(p)
                }
            }
            6 => Op::Lrn(Lrn {
                size: *[1, 3, 5].choose(r).unwrap(),
                alpha: r.random_range(1e-4..1.0),
                beta: r.random_range(0.5..1.0),
                k: r.random_range(1.0..2.0),
            }),
            7 => {
                let c = xs.channels;
                Op::BatchNorm(BatchNorm {
                    mean: uniform(r, c, -1.0, 1.0),
                    var: uniform(r, c, 0.1, 2.0),
                    gamma: uniform(r, c, -2.0, 2.0),
                    beta: uniform(r, c, -1.0, 1.0),
                    eps: 1e-5,
                })
            }
            8 => {
                let same: Vec<&(String, Shape)> = nodes.iter().filter(|(_, s)| *s == xs).collect();
                let other = same.choose(r).unwrap().0.clone();
                b.push(&id, Op::Add, &[&src, &other]);
                used.extend([src, other]);
                nodes.push((id, xs));
                made += 1;
                continue;
            }
            9 => {
                let same: Vec<&(String, Shape)> = nodes
                    .iter()
                    .filter(|(_, s)| s.height == xs.height && s.width == xs.width)
                    .collect();
                let (other, os) = same.choose(r).unwrap();
                let other = other.clone();
                let shape = Shape::new(xs.channels + os.channels, xs.height, xs.width);
                b.push(&id, Op::Concat, &[&src, &other]);
                used.extend([src, other]);
                nodes.push((id, shape));
                made += 1;
                continue;
            }
            _ => Op::Softmax,
        };
        let shape = out_shape(&op, xs);
        b.push(&id, op, &[&src]);
        used.push(src);
        nodes.push((id, shape));
        made += 1;
    }
    nodes_sinks_join(r, &mut b, &mut nodes, &used);
    let preprocess = Preprocess {
        mean: vec![r.random_range(0.0..255.0)],
        scale: 1.0 / 64.0,
        ..Preprocess::default()
    };
    let net = b.build(preprocess).expect("random graph is valid");
    let data = (0..input.len()).map(|_| r.random_range(0.0..255.0)).collect();
    let image = ImagePlane::from_data(input.width, input.height, input.channels, data).unwrap();
    let taps = nodes.iter().map(|(id, _)| LayerTap::new(id)).collect();
    Case { net, image, taps }
}

/// Reduces every unconsumed node to two features and concatenates them so
/// the graph has a single output.
fn nodes_sinks_join(r: &mut impl Rng, b: &mut GraphBuilder, nodes: &mut Vec<(String, Shape)>, used: &[String]) {
    let sinks: Vec<(String, Shape)> = nodes.iter().filter(|(n, _)| !used.contains(n)).cloned().collect();
    if sinks.len() < 2 {
        return;
    }
    let mut acc: Option<(String, usize)> = None;
    for (k, (s, xs)) in sinks.iter().enumerate() {
        let id = format!("head{k}");
        let op = Op::FullyConnected(FullyConnected {
            out_features: 2,
            in_features: xs.len(),
            weight: uniform(r, 2 * xs.len(), -0.2, 0.2),
            bias: Vec::new(),
        });
        b.push(&id, op, &[s]);
        nodes.push((id.clone(), Shape::new(2, 1, 1)));
        acc = Some(match acc {
            None => (id, 2),
            Some((prev, c)) => {
                let cat = format!("join{k}");
                b.push(&cat, Op::Concat, &[&prev, &id]);
                nodes.push((cat.clone(), Shape::new(c + 2, 1, 1)));
                (cat, c + 2)
            }
        });
    }
}

fn out_shape(op: &Op, xs: Shape) -> Shape {
    match op {
        Op::Conv2d(c) => Shape::new(
            c.out_channels,
            (xs.height + 2 * c.pad.0 - c.kernel.0) / c.stride.0 + 1,
            (xs.width + 2 * c.pad.1 - c.kernel.1) / c.stride.1 + 1,
        ),
        Op::FullyConnected(f) => Shape::new(f.out_features, 1, 1),
        Op::MaxPool(p) | Op::AvgPool(p) => Shape::new(
            xs.channels,
            (xs.height + 2 * p.pad.0 - p.kernel.0) / p.stride.0 + 1,
            (xs.width + 2 * p.pad.1 - p.kernel.1) / p.stride.1 + 1,
        ),
        _ => xs,
    }
}

/// Every node's output, evaluated by direct summation in graph order.
pub fn reference(net: &NetworkGraph, image: &ImagePlane) -> Vec<(String, Vec<f64>)> {
    let mut done: Vec<(String, Shape, Vec<f64>)> = Vec::new();
    for node in net.nodes() {
        let get = |name: &str| done.iter().find(|(n, _, _)| n == name).expect("inputs come first");
        let (xs, x) = match node.inputs.first() {
            Some(s) => {
                let (_, xs, x) = get(s);
                (*xs, x.clone())
            }
            None => (net.input_shape(), Vec::new()),
        };
        let (shape, y) = match &node.op {
            Op::Input(s) => {
                let p = net.preprocess();
                let mut y = Vec::new();
                for c in 0..s.channels {
                    let src = if p.bgr { s.channels - 1 - c } else { c };
                    let mean = if p.mean.len() == 1 { p.mean[0] } else { p.mean[c] };
                    for i in 0..s.height * s.width {
                        y.push((image.data()[src * s.height * s.width + i] - mean) * p.scale);
                    }
                }
                (*s, y)
            }
            Op::Conv2d(c) => {
                let ys = out_shape(&node.op, xs);
                let ipg = c.in_channels / c.groups;
                let opg = c.out_channels / c.groups;
                let mut y = vec![0.0; ys.len()];
                for oc in 0..c.out_channels {
                    for oy in 0..ys.height {
                        for ox in 0..ys.width {
                            let mut acc = c.bias.get(oc).map_or(0.0, |&b| b as f64);
                            for j in 0..ipg {
                                let ic = oc / opg * ipg + j;
                                for ky in 0..c.kernel.0 {
                                    for kx in 0..c.kernel.1 {
                                        let iy = (oy * c.stride.0 + ky) as i64 - c.pad.0 as i64;
                                        let ix = (ox * c.stride.1 + kx) as i64 - c.pad.1 as i64;
                                        if iy < 0 || ix < 0 || iy >= xs.height as i64 || ix >= xs.width as i64 {
                                            continue;
                                        }
                                        let w = c.weight[((oc * ipg + j) * c.kernel.0 + ky) * c.kernel.1 + kx] as f64;
                                        acc += w * x[(ic * xs.height + iy as usize) * xs.width + ix as usize];
                                    }
                                }
                            }
                            y[(oc * ys.height + oy) * ys.width + ox] = acc;
                        }
                    }
                }
                (ys, y)
            }
            Op::FullyConnected(f) => {
                let y = (0..f.out_features)
                    .map(|o| {
                        let dot: f64 = (0..f.in_features)
                            .map(|i| f.weight[o * f.in_features + i] as f64 * x[i])
                            .sum();
                        dot + f.bias.get(o).map_or(0.0, |&b| b as f64)
                    })
                    .collect();
                (Shape::new(f.out_features, 1, 1), y)
            }
            Op::Relu => (xs, x.iter().map(|v| v.max(0.0)).collect()),
            Op::MaxPool(p) | Op::AvgPool(p) => {
                let is_max = matches!(node.op, Op::MaxPool(_));
                let ys = out_shape(&node.op, xs);
                let mut y = Vec::with_capacity(ys.len());
                for c in 0..xs.channels {
                    for oy in 0..ys.height {
                        for ox in 0..ys.width {
                            let mut vals = Vec::new();
                            for ky in 0..p.kernel.0 {
                                for kx in 0..p.kernel.1 {
                                    let iy = (oy * p.stride.0 + ky) as i64 - p.pad.0 as i64;
                                    let ix = (ox * p.stride.1 + kx) as i64 - p.pad.1 as i64;
                                    if iy >= 0 && ix >= 0 && iy < xs.height as i64 && ix < xs.width as i64 {
                                        vals.push(x[(c * xs.height + iy as usize) * xs.width + ix as usize]);
                                    }
                                }
                            }
                            y.push(if is_max {
                                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                            } else {
                                vals.iter().sum::<f64>() / vals.len() as f64
                            });
                        }
                    }
                }
                (ys, y)
            }
            Op::Lrn(l) => {
                let n = xs.height * xs.width;
                let mut y = vec![0.0; x.len()];
                for c in 0..xs.channels as i64 {
                    for i in 0..n {
                        let mut ss = 0.0;
                        for j in c - (l.size / 2) as i64..=c + (l.size / 2) as i64 {
                            if j >= 0 && j < xs.channels as i64 {
                                ss += x[j as usize * n + i].powi(2);
                            }
                        }
                        y[c as usize * n + i] =
                            x[c as usize * n + i] / (l.k + l.alpha * ss / l.size as f64).powf(l.beta);
                    }
                }
                (xs, y)
            }
            Op::BatchNorm(bn) => {
                let n = xs.height * xs.width;
                let y = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let c = i / n;
                        (v - bn.mean[c] as f64) / (bn.var[c] as f64 + bn.eps).sqrt() * bn.gamma[c] as f64
                            + bn.beta[c] as f64
                    })
                    .collect();
                (xs, y)
            }
            Op::Add => {
                let (_, _, z) = get(&node.inputs[1]);
                (xs, x.iter().zip(z).map(|(a, b)| a + b).collect())
            }
            Op::Concat => {
                let (_, zs, z) = get(&node.inputs[1]);
                let mut y = x.clone();
                y.extend_from_slice(z);
                (Shape::new(xs.channels + zs.channels, xs.height, xs.width), y)
            }
            Op::Softmax => {
                let n = xs.height * xs.width;
                let mut y = vec![0.0; x.len()];
                for i in 0..n {
                    let m = (0..xs.channels).map(|c| x[c * n + i]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..xs.channels).map(|c| (x[c * n + i] - m).exp()).sum();
                    for c in 0..xs.channels {
                        y[c * n + i] = (x[c * n + i] - m).exp() / z;
                    }
                }
                (xs, y)
            }
        };
        done.push((node.id.clone(), shape, y));
    }
    done.into_iter().map(|(n, _, y)| (n, y)).collect()
}

/// Largest `|a - b| / max(1, |b|)` over two vectors of equal length.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}
