//! Hand-built networks with known answers for the context experiment.

use std::collections::BTreeSet;

use crate::engine::{Conv2d, GraphBuilder, NetworkGraph, Op, Pool, Preprocess, Shape};
use crate::error::{Error, Result};
use crate::stimuli::{CategoryLabel, Condition, Paradigm, PatternConfig, PatternRenderer};

/// Final pooled detector tap of the oracle networks.
pub const DETECT_STAGE: &str = "detect";
/// Suppression weight of the clutter channel in the crowding detector.
const CLUTTER_WEIGHT: f32 = 100.0;

type Pixels = Vec<(i64, i64)>;

/// Network that responds only to easy-condition targets of `config`, with
/// one pooled detector per category. Its category information is maximal
/// for easy stimuli and zero for hard ones.
pub fn easy_target_detector(renderer: &PatternRenderer, config: &PatternConfig) -> Result<NetworkGraph> {
    let canvas = renderer.canvas();
    let jitter = renderer
        .layout(config, CategoryLabel::new(0, Condition::Easy), 0)?
        .jitter_bound;
    let still = PatternConfig {
        jitter_multiplier: 0.0,
        ..config.clone()
    };
    let layout =
        |category: usize, condition: Condition| renderer.layout(&still, CategoryLabel::new(category, condition), 0);
    let mut b = GraphBuilder::new("easy-target-detector", Shape::new(1, canvas, canvas));
    let last = match config.paradigm {
        Paradigm::Segmentation => {
            // diagonal elements of the two easy arrangements
            let diagonals = |category: usize| -> Result<Vec<((i64, i64), Pixels)>> {
                Ok(layout(category, Condition::Easy)?
                    .elements
                    .into_iter()
                    .filter(|e| e.pixels.iter().any(|p| p.1 != e.pixels[0].1))
                    .map(|e| {
                        let rel = e
                            .pixels
                            .iter()
                            .map(|&(x, y)| (x - e.nominal.0, y - e.nominal.1))
                            .collect();
                        (e.nominal, rel)
                    })
                    .collect())
            };
            let (rows, cols) = (diagonals(0)?, diagonals(1)?);
            if rows.len() != 3 || cols.len() != 3 {
                return Err(Error::Geometry("easy segmentation target needs three diagonals".into()));
            }
            let template = &rows[0].1;
            if template.len() < 2 {
                return Err(Error::Geometry("diagonal elements are too short to detect".into()));
            }
            let (kernel, r) = positive_template(template);
            let bias = vec![-(template.len() as f32 - 0.5)];
            b.push("diagonal", conv_raw(1, 1, 2 * r + 1, r, kernel, bias), &["data"]);
            b.push("diagonal_relu", Op::Relu, &["diagonal"]);
            let mut src = "diagonal_relu".to_string();
            if jitter > 0 {
                let k = 2 * jitter as usize + 1;
                src = b.push(
                    "tolerance",
                    Op::MaxPool(Pool {
                        kernel: (k, k),
                        stride: (1, 1),
                        pad: (jitter as usize, jitter as usize),
                    }),
                    &[&src],
                );
            }
            // three pooled diagonals at the arrangement's offsets
            let offsets = |set: &[((i64, i64), Pixels)]| -> Pixels {
                let mut c: Vec<(i64, i64)> = set.iter().map(|(n, _)| *n).collect();
                c.sort_unstable();
                let mid = c[1];
                c.iter().map(|&(x, y)| (x - mid.0, y - mid.1)).collect()
            };
            let groups = [offsets(&rows), offsets(&cols)];
            let r = groups
                .iter()
                .flatten()
                .map(|&(x, y)| x.abs().max(y.abs()))
                .max()
                .unwrap_or(0);
            let side = 2 * r as usize + 1;
            let mut weight = vec![0.0f32; 2 * side * side];
            for (o, g) in groups.iter().enumerate() {
                for &(x, y) in g {
                    weight[o * side * side + (y + r) as usize * side + (x + r) as usize] = 1.0;
                }
            }
            b.push(
                "arrangement",
                conv_raw(2, 1, side, r as usize, weight, vec![-1.25; 2]),
                &[&src],
            );
            b.push("arrangement_relu", Op::Relu, &["arrangement"])
        }
        Paradigm::Crowding => {
            let categories = config.paradigm.category_count();
            let mut letters = Vec::with_capacity(categories);
            let mut centre = (0, 0);
            for c in 0..categories {
                let el = layout(c, Condition::Easy)?.elements.remove(0);
                centre = el.nominal;
                letters.push(
                    el.pixels
                        .iter()
                        .map(|&(x, y)| (x - centre.0, y - centre.1))
                        .collect::<Pixels>(),
                );
            }
            let bbox = bounding_box(letters.iter().flatten());
            let clutter: Pixels = layout(0, Condition::Hard)?.elements[1..]
                .iter()
                .flat_map(|e| e.pixels.iter().map(|&(x, y)| (x - centre.0, y - centre.1)))
                .collect();
            let mut ring = BTreeSet::new();
            for &(x, y) in &clutter {
                for dy in -jitter..=jitter {
                    for dx in -jitter..=jitter {
                        let p = (x + dx, y + dy);
                        if !inside(bbox, p) {
                            ring.insert(p);
                        }
                    }
                }
            }
            let ring: Pixels = ring.into_iter().collect();
            let r = ring
                .iter()
                .chain(letters.iter().flatten())
                .map(|&(x, y)| x.abs().max(y.abs()))
                .max()
                .unwrap_or(0);
            let side = 2 * r as usize + 1;
            let mut weight = vec![0.0f32; (categories + 1) * side * side];
            let mut bias = Vec::with_capacity(categories + 1);
            for (o, px) in letters.iter().enumerate() {
                let plane = &mut weight[o * side * side..(o + 1) * side * side];
                fill_signed(plane, side, r, px, bbox);
                bias.push(-(px.len() as f32 - 0.5));
            }
            let plane = &mut weight[categories * side * side..];
            for &(x, y) in &ring {
                plane[(y + r) as usize * side + (x + r) as usize] = 1.0;
            }
            bias.push(0.0);
            b.push(
                "letters",
                conv_raw(categories + 1, 1, side, r as usize, weight, bias),
                &["data"],
            );
            b.push("letters_relu", Op::Relu, &["letters"]);
            let mut mix = vec![0.0f32; categories * (categories + 1)];
            for c in 0..categories {
                mix[c * (categories + 1) + c] = 1.0;
                mix[c * (categories + 1) + categories] = -CLUTTER_WEIGHT;
            }
            b.push(
                "isolated",
                conv_raw(categories, categories + 1, 1, 0, mix, vec![0.0; categories]),
                &["letters_relu"],
            );
            b.push("isolated_relu", Op::Relu, &["isolated"])
        }
        Paradigm::Shape => {
            let categories = config.paradigm.category_count();
            let centre = (canvas / 2) as i64;
            let rel = |category: usize, condition: Condition| -> Result<Pixels> {
                Ok(layout(category, condition)?.elements[0]
                    .pixels
                    .iter()
                    .map(|&(x, y)| (x - centre, y - centre))
                    .collect())
            };
            let mut patterns = Vec::with_capacity(categories);
            let mut all = Vec::new();
            for c in 0..categories {
                let p = rel(c, Condition::Easy)?;
                all.extend(p.iter().copied());
                all.extend(rel(c, Condition::Hard)?);
                patterns.push(p);
            }
            let (x0, y0, x1, y1) = bounding_box(all.iter());
            let bbox = (x0 - 1, y0 - 1, x1 + 1, y1 + 1);
            let r = [x0 - 1, y0 - 1, x1 + 1, y1 + 1]
                .iter()
                .map(|v| v.abs())
                .max()
                .unwrap_or(0);
            let side = 2 * r as usize + 1;
            let mut weight = vec![0.0f32; categories * side * side];
            let mut bias = Vec::with_capacity(categories);
            for (o, px) in patterns.iter().enumerate() {
                fill_signed(&mut weight[o * side * side..(o + 1) * side * side], side, r, px, bbox);
                bias.push(-(px.len() as f32 - 0.5));
            }
            b.push(
                "shapes",
                conv_raw(categories, 1, side, r as usize, weight, bias),
                &["data"],
            );
            b.push("shapes_relu", Op::Relu, &["shapes"])
        }
    };
    b.push(
        DETECT_STAGE,
        Op::MaxPool(Pool {
            kernel: (canvas, canvas),
            stride: (1, 1),
            pad: (0, 0),
        }),
        &[&last],
    );
    b.build(binary_input())?
        .with_default_taps(vec![DETECT_STAGE.to_string()])
}

/// Network whose every output neuron is the constant 1.
pub fn constant_network(input: Shape) -> Result<NetworkGraph> {
    let mut b = GraphBuilder::new("constant", input);
    b.push(
        "const",
        Op::Conv2d(Conv2d {
            out_channels: 1,
            in_channels: input.channels,
            kernel: (1, 1),
            stride: (1, 1),
            pad: (0, 0),
            groups: 1,
            weight: vec![0.0; input.channels],
            bias: vec![1.0],
        }),
        &["data"],
    );
    b.build(Preprocess::default())?.with_default_taps(vec!["const".into()])
}

/// Pixels 0 / 255 map to 0 / 1.
fn binary_input() -> Preprocess {
    Preprocess {
        scale: 1.0 / 255.0,
        ..Preprocess::default()
    }
}

fn bounding_box<'a>(px: impl Iterator<Item = &'a (i64, i64)>) -> (i64, i64, i64, i64) {
    px.fold((i64::MAX, i64::MAX, i64::MIN, i64::MIN), |(a, b, c, d), &(x, y)| {
        (a.min(x), b.min(y), c.max(x), d.max(y))
    })
}

fn inside((x0, y0, x1, y1): (i64, i64, i64, i64), (x, y): (i64, i64)) -> bool {
    x0 <= x && x <= x1 && y0 <= y && y <= y1
}

/// +1 on `px`, -1 on the rest of `bbox`, in a `side`x`side` plane centered
/// at offset `r`.
fn fill_signed(plane: &mut [f32], side: usize, r: i64, px: &[(i64, i64)], bbox: (i64, i64, i64, i64)) {
    let (x0, y0, x1, y1) = bbox;
    for y in y0..=y1 {
        for x in x0..=x1 {
            plane[(y + r) as usize * side + (x + r) as usize] = -1.0;
        }
    }
    for &(x, y) in px {
        plane[(y + r) as usize * side + (x + r) as usize] = 1.0;
    }
}

/// +1 on `px` in the smallest centered square plane, and its half-side.
fn positive_template(px: &[(i64, i64)]) -> (Vec<f32>, usize) {
    let r = px.iter().map(|&(x, y)| x.abs().max(y.abs())).max().unwrap_or(0);
    let side = 2 * r as usize + 1;
    let mut w = vec![0.0f32; side * side];
    for &(x, y) in px {
        w[(y + r) as usize * side + (x + r) as usize] = 1.0;
    }
    (w, r as usize)
}

fn conv_raw(out: usize, inp: usize, side: usize, pad: usize, weight: Vec<f32>, bias: Vec<f32>) -> Op {
    Op::Conv2d(Conv2d {
        out_channels: out,
        in_channels: inp,
        kernel: (side, side),
        stride: (1, 1),
        pad: (pad, pad),
        groups: 1,
        weight,
        bias,
    })
}
