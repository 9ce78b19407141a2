//! Regenerates the NWF files under `tests/fixtures`.
//!
//! ```text
//! cargo run -p percept-core --example make_fixtures
//! ```

use std::path::Path;

use percept_core::engine::{save_network, Conv2d, FullyConnected, GraphBuilder, Op, Pool, Preprocess, Shape};
use percept_core::seed::rng;
use rand::Rng;

fn weights(n: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-0.5f32..0.5)).collect()
}

fn conv(out: usize, inp: usize, k: usize, pad: usize, seed: u64) -> Op {
    Op::Conv2d(Conv2d {
        out_channels: out,
        in_channels: inp,
        kernel: (k, k),
        stride: (1, 1),
        pad: (pad, pad),
        groups: 1,
        weight: weights(out * inp * k * k, seed),
        bias: weights(out, seed + 1),
    })
}

fn fc(out: usize, inp: usize, seed: u64) -> Op {
    Op::FullyConnected(FullyConnected {
        out_features: out,
        in_features: inp,
        weight: weights(out * inp, seed),
        bias: weights(out, seed + 1),
    })
}

fn main() -> percept_core::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir)?;

    let mut b = GraphBuilder::new("minimal", Shape::new(1, 4, 4));
    b.push("conv", conv(3, 1, 4, 0, 1), &["data"]);
    b.push("prob", Op::Softmax, &["conv"]);
    save_network(&b.build(Preprocess::default())?, dir.join("minimal.nwf"))?;

    let mut b = GraphBuilder::new("toy", Shape::new(3, 8, 8));
    b.push("conv1", conv(4, 3, 3, 1, 10), &["data"]);
    b.push("relu1", Op::Relu, &["conv1"]);
    b.push("fc", fc(5, 256, 20), &["relu1"]);
    b.push("prob", Op::Softmax, &["fc"]);
    save_network(&b.build(Preprocess::mean_pixel(120.0))?, dir.join("toy.nwf"))?;

    let pool = Op::MaxPool(Pool {
        kernel: (2, 2),
        stride: (2, 2),
        pad: (0, 0),
    });
    let mut b = GraphBuilder::new("tiny-vgg", Shape::new(3, 16, 16));
    b.push("conv1_1", conv(4, 3, 3, 1, 30), &["data"]);
    b.push("relu1_1", Op::Relu, &["conv1_1"]);
    b.push("pool1", pool.clone(), &["relu1_1"]);
    b.push("conv2_1", conv(4, 4, 3, 1, 40), &["pool1"]);
    b.push("relu2_1", Op::Relu, &["conv2_1"]);
    b.push("pool2", pool, &["relu2_1"]);
    b.push("fc6", fc(6, 64, 50), &["pool2"]);
    b.push("prob", Op::Softmax, &["fc6"]);
    save_network(&b.build(Preprocess::mean_pixel(117.0))?, dir.join("tiny-vgg.nwf"))?;
    Ok(())
}
