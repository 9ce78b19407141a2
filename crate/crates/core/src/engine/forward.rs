use serde::{Deserialize, Serialize};

use super::graph::{Conv2d, NetworkGraph, Op, Shape};
use super::kernels::{self, FftConvPlan};
use super::pool;
use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Named capture point on a node output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerTap {
    pub node: String,
    /// Display name of the computation stage (`data`, `conv1_1`, `prob`, ...).
    pub stage: String,
}

impl LayerTap {
    pub fn new(node: impl Into<String>) -> Self {
        let node = node.into();
        Self {
            stage: node.clone(),
            node,
        }
    }

    pub fn named(node: impl Into<String>, stage: impl Into<String>) -> Self {
        Self {
            node: node.into(),
            stage: stage.into(),
        }
    }
}

/// Tap values captured during one forward pass, in request order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationSnapshot {
    pub taps: Vec<(LayerTap, Vec<f64>)>,
}

impl ActivationSnapshot {
    pub fn get(&self, stage: &str) -> Option<&[f64]> {
        self.taps
            .iter()
            .find(|(t, _)| t.stage == stage)
            .map(|(_, v)| v.as_slice())
    }

    pub fn neuron_counts(&self) -> Vec<usize> {
        self.taps.iter().map(|(_, v)| v.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Convolution algorithm selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMode {
    /// Per-layer choice from a static cost estimate.
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    pub conv: ConvMode,
    /// Keep at most this many evenly strided neurons per tap (see
    /// [`neuron_subset`]).
    pub max_neurons_per_tap: Option<usize>,
}

/// Indices kept when a tap of `len` neurons is limited to `max`:
/// `floor(i * len / max)` for `i < max`, or every neuron if `len <= max`.
pub fn neuron_subset(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max).collect()
    }
}

/// Conventional tap set: declared taps if the graph carries them, otherwise
/// the input, every convolution and fully-connected output and the graph
/// output.
pub fn default_taps(net: &NetworkGraph) -> Vec<LayerTap> {
    if let Some(t) = net.declared_default_taps() {
        return t.iter().map(LayerTap::new).collect();
    }
    let mut taps = Vec::new();
    for &i in net.order() {
        let n = &net.nodes()[i];
        let keep = matches!(n.op, Op::Input(_) | Op::Conv2d(_) | Op::FullyConnected(_)) || n.id == net.output_node().id;
        if keep {
            let stage = match n.op {
                Op::Input(_) => "data".to_string(),
                Op::Softmax if n.id == net.output_node().id => "prob".to_string(),
                _ => n.id.clone(),
            };
            if !taps.iter().any(|t: &LayerTap| t.node == n.id) {
                taps.push(LayerTap::named(&n.id, stage));
            }
        }
    }
    taps
}

pub fn forward(net: &NetworkGraph, image: &ImagePlane, taps: &[LayerTap]) -> Result<ActivationSnapshot> {
    forward_with(net, image, taps, ForwardOptions::default())
}

pub fn forward_with(
    net: &NetworkGraph,
    image: &ImagePlane,
    taps: &[LayerTap],
    opts: ForwardOptions,
) -> Result<ActivationSnapshot> {
    run(net, image, taps, opts, &mut [])
}

/// Forward pass where nodes with a `presets` entry take that full output
/// instead of being computed. Presets are consumed.
fn run(
    net: &NetworkGraph,
    image: &ImagePlane,
    taps: &[LayerTap],
    opts: ForwardOptions,
    presets: &mut [Option<Vec<f64>>],
) -> Result<ActivationSnapshot> {
    let n = net.nodes().len();
    let fixed: Vec<bool> = (0..n).map(|i| presets.get(i).is_some_and(Option::is_some)).collect();
    let preset = |i: usize| fixed[i];
    let mut tapped = vec![false; n];
    for t in taps {
        let i = net
            .node_index(&t.node)
            .ok_or_else(|| Error::node(&t.node, "tap names an unknown node"))?;
        tapped[i] = true;
    }
    let inputs: Vec<Vec<usize>> = net
        .nodes()
        .iter()
        .map(|node| node.inputs.iter().map(|s| net.node_index(s).unwrap()).collect())
        .collect();

    // Only evaluate nodes that some tap depends on.
    let mut needed = tapped.clone();
    for &i in net.order().iter().rev() {
        if needed[i] && !preset(i) {
            for &s in &inputs[i] {
                needed[s] = true;
            }
        }
    }
    let mut remaining = vec![0usize; n];
    for &i in net.order() {
        if needed[i] && !preset(i) {
            for &s in &inputs[i] {
                remaining[s] += 1;
            }
        }
    }
    let demand = plan_demand(net, &inputs, &needed, &tapped, &fixed, opts.max_neurons_per_tap);

    let mut values: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut captured: Vec<Option<Vec<f64>>> = vec![None; n];
    for &i in net.order() {
        if !needed[i] {
            continue;
        }
        let node = &net.nodes()[i];
        let ins: &[usize] = if fixed[i] { &[] } else { &inputs[i] };
        let out = match (fixed[i].then(|| presets[i].take()).flatten(), &demand[i]) {
            (Some(v), Some(at)) => {
                let out = at.iter().map(|&k| v[k]).collect();
                pool::recycle(v);
                out
            }
            (Some(v), None) => v,
            (None, Some(at)) => eval_sparse(net, i, ins, at, &values, &demand, opts),
            (None, None) => eval_node(net, i, image, ins, &mut values, &remaining, opts)?,
        };
        for &s in ins {
            remaining[s] -= 1;
            if remaining[s] == 0 {
                if let Some(v) = values[s].take() {
                    pool::recycle(v);
                }
            }
        }
        let mut out = Some(out);
        if tapped[i] {
            let v = out.as_ref().unwrap();
            let keep = match (opts.max_neurons_per_tap, &demand[i]) {
                (Some(max), None) if net.shape_at(i).len() > max => {
                    neuron_subset(v.len(), max).into_iter().map(|k| v[k]).collect()
                }
                _ if remaining[i] == 0 => out.take().unwrap(),
                _ => v.clone(),
            };
            if keep.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(node.id.clone()));
            }
            captured[i] = Some(keep);
        }
        if let Some(out) = out {
            if remaining[i] > 0 {
                values[i] = Some(out);
            } else {
                pool::recycle(out);
            }
        }
    }

    let mut snapshot = ActivationSnapshot::default();
    for t in taps {
        let i = net.node_index(&t.node).unwrap();
        let v = match taps.iter().filter(|u| u.node == t.node).count() {
            1 => captured[i].take(),
            _ => captured[i].clone(),
        }
        .expect("tapped node evaluated");
        snapshot.taps.push((t.clone(), v));
    }
    Ok(snapshot)
}

/// Flat output indices each node must produce when only a subset is ever
/// read, or `None` where the whole tensor is computed. Element-wise ops,
/// concatenation and convolution support partial evaluation; a node read
/// in full anywhere, or by consumers wanting different subsets, is computed
/// in full.
fn plan_demand(
    net: &NetworkGraph,
    inputs: &[Vec<usize>],
    needed: &[bool],
    tapped: &[bool],
    fixed: &[bool],
    max: Option<usize>,
) -> Vec<Option<Vec<usize>>> {
    let n = net.nodes().len();
    let mut demand: Vec<Option<Vec<usize>>> = vec![None; n];
    let Some(max) = max else {
        return demand;
    };
    // requests[i]: None until someone asks; Some(None) means full.
    let mut requests: Vec<Option<Option<Vec<usize>>>> = vec![None; n];
    let request = |slot: &mut Option<Option<Vec<usize>>>, want: Option<Vec<usize>>| {
        *slot = match slot.take() {
            None => Some(want),
            Some(prev) if prev == want => Some(prev),
            Some(_) => Some(None),
        };
    };
    for &i in net.order().iter().rev() {
        if !needed[i] {
            continue;
        }
        if tapped[i] {
            let len = net.shape_at(i).len();
            let want = (len > max).then(|| neuron_subset(len, max));
            request(&mut requests[i], want);
        }
        let node = &net.nodes()[i];
        let sparse_ok = fixed[i]
            || matches!(
                node.op,
                Op::Relu | Op::BatchNorm(_) | Op::Add | Op::Concat | Op::Conv2d(_)
            );
        let mine = requests[i].clone().flatten().filter(|_| sparse_ok);
        demand[i] = mine.clone();
        if fixed[i] {
            continue;
        }
        for (k, &s) in inputs[i].iter().enumerate() {
            let want = match (&node.op, &mine) {
                (Op::Relu | Op::BatchNorm(_) | Op::Add, Some(at)) => Some(at.clone()),
                (Op::Concat, Some(at)) => {
                    let lo: usize = inputs[i][..k].iter().map(|&j| net.shape_at(j).len()).sum();
                    let hi = lo + net.shape_at(s).len();
                    Some(at.iter().filter(|&&v| v >= lo && v < hi).map(|v| v - lo).collect())
                }
                _ => None,
            };
            request(&mut requests[s], want);
        }
    }
    demand
}

/// Values of node `s` at `at`, from either a partial or a full result.
fn gather(values: &[Option<Vec<f64>>], demand: &[Option<Vec<usize>>], s: usize, at: &[usize]) -> Vec<f64> {
    let v = values[s].as_ref().expect("input evaluated");
    match &demand[s] {
        Some(_) => v.clone(),
        None => at.iter().map(|&k| v[k]).collect(),
    }
}

fn eval_sparse(
    net: &NetworkGraph,
    i: usize,
    ins: &[usize],
    at: &[usize],
    values: &[Option<Vec<f64>>],
    demand: &[Option<Vec<usize>>],
    opts: ForwardOptions,
) -> Vec<f64> {
    let ys = net.shape_at(i);
    match &net.nodes()[i].op {
        Op::Relu => {
            let mut v = gather(values, demand, ins[0], at);
            kernels::relu(&mut v);
            v
        }
        Op::BatchNorm(b) => {
            let mut v = gather(values, demand, ins[0], at);
            for (x, &k) in v.iter_mut().zip(at) {
                let c = k / ys.plane();
                let inv = (b.gamma[c] as f64) / (b.var[c] as f64 + b.eps).sqrt();
                *x = *x * inv + (b.beta[c] as f64 - b.mean[c] as f64 * inv);
            }
            v
        }
        Op::Add => {
            let mut acc = gather(values, demand, ins[0], at);
            for &s in &ins[1..] {
                for (a, b) in acc.iter_mut().zip(gather(values, demand, s, at)) {
                    *a += b;
                }
            }
            acc
        }
        Op::Concat => {
            let mut out = Vec::with_capacity(at.len());
            let mut lo = 0;
            for &s in ins {
                let hi = lo + net.shape_at(s).len();
                let part: Vec<usize> = at.iter().filter(|&&v| v >= lo && v < hi).map(|v| v - lo).collect();
                out.extend(gather(values, demand, s, &part));
                lo = hi;
            }
            out
        }
        Op::Conv2d(c) => {
            let xs = net.shape_at(ins[0]);
            let x = values[ins[0]].as_ref().expect("input evaluated");
            if matches!(opts.conv, ConvMode::Auto) {
                let limit = (c.kernel.0 * c.kernel.1) / 2;
                if let Some(s) =
                    kernels::SparseInput::new(x, xs, limit).filter(|s| kernels::prefer_sparse(c, s, xs, ys))
                {
                    let sums = net.kernel_sums[i].get_or_init(|| kernels::kernel_prefix_sums(c));
                    return kernels::conv2d_sparse_at(c, sums, &s, xs, ys, at);
                }
            }
            let fft = match opts.conv {
                ConvMode::Auto => kernels::prefer_fft_at(c, xs, ys, at.len()),
                ConvMode::Direct => false,
                ConvMode::Fft => true,
            };
            if fft {
                conv_plan(net, i, c, xs, ys, opts, |p| p.apply_at(c, x, xs, ys, at))
            } else {
                kernels::conv2d_direct_at(c, x, xs, ys, at)
            }
        }
        other => unreachable!("no partial evaluation for {}", other.kind()),
    }
}

fn use_fft(c: &Conv2d, xs: Shape, ys: Shape, opts: ForwardOptions) -> bool {
    match opts.conv {
        ConvMode::Auto => kernels::prefer_fft(c, xs, ys),
        ConvMode::Direct => false,
        ConvMode::Fft => true,
    }
}

fn conv_plan<T>(
    net: &NetworkGraph,
    i: usize,
    c: &Conv2d,
    xs: Shape,
    ys: Shape,
    opts: ForwardOptions,
    f: impl FnOnce(&FftConvPlan) -> T,
) -> T {
    if matches!(opts.conv, ConvMode::Auto) {
        f(net.fft_plans[i].get_or_init(|| FftConvPlan::new(c, xs, ys)))
    } else {
        f(&FftConvPlan::new(c, xs, ys))
    }
}

fn take_or_clone(values: &mut [Option<Vec<f64>>], remaining: &[usize], i: usize) -> Vec<f64> {
    if remaining[i] == 1 {
        values[i].take().expect("input evaluated")
    } else {
        values[i].clone().expect("input evaluated")
    }
}

fn eval_node(
    net: &NetworkGraph,
    i: usize,
    image: &ImagePlane,
    ins: &[usize],
    values: &mut [Option<Vec<f64>>],
    remaining: &[usize],
    opts: ForwardOptions,
) -> Result<Vec<f64>> {
    let node = &net.nodes()[i];
    let ys = net.shape_at(i);
    let input = |k: usize| values[ins[k]].as_ref().expect("input evaluated");
    Ok(match &node.op {
        Op::Input(s) => {
            if image.channels() != s.channels || image.height() != s.height || image.width() != s.width {
                return Err(Error::node(
                    &node.id,
                    format!(
                        "expects a {}x{}x{} image, got {}x{}x{}",
                        s.channels,
                        s.height,
                        s.width,
                        image.channels(),
                        image.height(),
                        image.width()
                    ),
                ));
            }
            preprocess(net, image)
        }
        Op::Conv2d(c) => {
            let xs = net.shape_at(ins[0]);
            if use_fft(c, xs, ys, opts) {
                conv_plan(net, i, c, xs, ys, opts, |p| p.apply(c, input(0), xs, ys))
            } else {
                kernels::conv2d_direct(c, input(0), xs, ys)
            }
        }
        Op::FullyConnected(f) => kernels::fully_connected(f, input(0)),
        Op::Relu => {
            let mut v = take_or_clone(values, remaining, ins[0]);
            kernels::relu(&mut v);
            v
        }
        Op::MaxPool(p) => kernels::max_pool(p, input(0), net.shape_at(ins[0]), ys),
        Op::AvgPool(p) => kernels::avg_pool(p, input(0), net.shape_at(ins[0]), ys),
        Op::Lrn(l) => kernels::lrn(l, input(0), ys),
        Op::BatchNorm(b) => {
            let mut v = take_or_clone(values, remaining, ins[0]);
            kernels::batch_norm(b, &mut v, ys);
            v
        }
        Op::Add => {
            let mut acc = input(0).clone();
            for k in 1..ins.len() {
                for (a, b) in acc.iter_mut().zip(input(k)) {
                    *a += b;
                }
            }
            acc
        }
        Op::Concat => {
            let mut out = pool::empty(ys.len());
            for k in 0..ins.len() {
                out.extend_from_slice(input(k));
            }
            out
        }
        Op::Softmax => {
            let mut v = take_or_clone(values, remaining, ins[0]);
            kernels::softmax_channels(&mut v, ys);
            v
        }
    })
}

fn preprocess(net: &NetworkGraph, image: &ImagePlane) -> Vec<f64> {
    let p = net.preprocess();
    let c = image.channels();
    let mut out = Vec::with_capacity(image.data().len());
    for ch in 0..c {
        let src = if p.bgr { c - 1 - ch } else { ch };
        let mean = p.mean_for(ch);
        out.extend(image.plane(src).iter().map(|v| (v - mean) * p.scale));
    }
    out
}

/// Forward passes over images on the line `base + s * (probe - base)`.
///
/// Nodes that are affine in the input image (convolution, fully-connected,
/// batch norm, average pooling, add, concat and the input transform) are
/// evaluated once for the base and once per probe; their outputs at every
/// scale are the matching affine combination. Only the remaining nodes run
/// once per scale.
#[derive(Debug, Clone)]
pub struct AffineFamily {
    taps: Vec<LayerTap>,
    opts: ForwardOptions,
    /// Affine nodes read by a tap or a needed non-affine node.
    boundary: Vec<LayerTap>,
    base: ActivationSnapshot,
    image: ImagePlane,
    /// Per tap, the boundary node it reads through zero or more ReLUs and
    /// whether any ReLU applies, when every tap has that form.
    pointwise: Option<Vec<(usize, bool)>>,
}

const CHUNK: usize = 2048;

impl AffineFamily {
    pub fn new(net: &NetworkGraph, base: &ImagePlane, taps: &[LayerTap], opts: ForwardOptions) -> Result<Self> {
        let n = net.nodes().len();
        let index = |id: &str| {
            net.node_index(id)
                .ok_or_else(|| Error::node(id, "tap names an unknown node"))
        };
        let mut affine = vec![false; n];
        for &i in net.order() {
            let node = &net.nodes()[i];
            let op_affine = matches!(
                node.op,
                Op::Input(_)
                    | Op::Conv2d(_)
                    | Op::FullyConnected(_)
                    | Op::BatchNorm(_)
                    | Op::AvgPool(_)
                    | Op::Add
                    | Op::Concat
            );
            affine[i] = op_affine && node.inputs.iter().all(|s| affine[net.node_index(s).unwrap()]);
        }
        let mut needed = vec![false; n];
        let mut read = vec![false; n];
        for t in taps {
            let i = index(&t.node)?;
            needed[i] = true;
            read[i] = true;
        }
        for &i in net.order().iter().rev() {
            if needed[i] && !affine[i] {
                for s in &net.nodes()[i].inputs {
                    let s = net.node_index(s).unwrap();
                    needed[s] = true;
                    read[s] = true;
                }
            }
        }
        let boundary_nodes: Vec<usize> = (0..n).filter(|&i| affine[i] && read[i]).collect();

        let subset = |i: usize| opts.max_neurons_per_tap.is_some_and(|m| net.shape_at(i).len() > m);
        let pointwise = taps
            .iter()
            .map(|t| {
                let mut i = net.node_index(&t.node).unwrap();
                let mut relu = false;
                if subset(i) {
                    return None;
                }
                while !affine[i] {
                    let node = &net.nodes()[i];
                    if !matches!(node.op, Op::Relu) {
                        return None;
                    }
                    relu = true;
                    i = net.node_index(&node.inputs[0]).unwrap();
                }
                Some((boundary_nodes.iter().position(|&b| b == i)?, relu))
            })
            .collect();

        let boundary: Vec<LayerTap> = boundary_nodes
            .iter()
            .map(|&i| LayerTap::new(&net.nodes()[i].id))
            .collect();
        let full = ForwardOptions {
            max_neurons_per_tap: None,
            ..opts
        };
        Ok(Self {
            taps: taps.to_vec(),
            opts,
            base: forward_with(net, base, &boundary, full)?,
            boundary,
            image: base.clone(),
            pointwise,
        })
    }

    /// Calls `f(k, t, offset, values)` with consecutive runs of tap `t`'s
    /// values, starting at neuron `offset`, for the image at `scales[k]`.
    /// Every tap is covered completely for every scale.
    pub fn for_each_chunk(
        &self,
        net: &NetworkGraph,
        probe: &ImagePlane,
        scales: &[f64],
        mut f: impl FnMut(usize, usize, usize, &[f64]) -> Result<()>,
    ) -> Result<()> {
        let full = ForwardOptions {
            max_neurons_per_tap: None,
            ..self.opts
        };
        let at_probe = forward_with(net, probe, &self.boundary, full)?;
        let result = match &self.pointwise {
            Some(plan) => self.chunks(&at_probe, plan, scales, &mut f),
            None => self.passes(net, &at_probe, scales, &mut f),
        };
        for (_, v) in at_probe.taps {
            pool::recycle(v);
        }
        result
    }

    fn chunks(
        &self,
        at_probe: &ActivationSnapshot,
        plan: &[(usize, bool)],
        scales: &[f64],
        f: &mut impl FnMut(usize, usize, usize, &[f64]) -> Result<()>,
    ) -> Result<()> {
        let mut buf = [0.0; CHUNK];
        for (t, &(bi, relu)) in plan.iter().enumerate() {
            let (b, p) = (&self.base.taps[bi].1, &at_probe.taps[bi].1);
            for lo in (0..b.len()).step_by(CHUNK) {
                let hi = (lo + CHUNK).min(b.len());
                let out = &mut buf[..hi - lo];
                for (k, &s) in scales.iter().enumerate() {
                    let floor = if relu { 0.0 } else { f64::NEG_INFINITY };
                    let mut finite = true;
                    for ((o, b), p) in out.iter_mut().zip(&b[lo..hi]).zip(&p[lo..hi]) {
                        let v = b + s * (p - b);
                        finite &= v.is_finite();
                        *o = v.max(floor);
                    }
                    if !finite {
                        return Err(Error::NonFinite(self.taps[t].node.clone()));
                    }
                    f(k, t, lo, out)?;
                }
            }
        }
        Ok(())
    }

    fn passes(
        &self,
        net: &NetworkGraph,
        at_probe: &ActivationSnapshot,
        scales: &[f64],
        f: &mut impl FnMut(usize, usize, usize, &[f64]) -> Result<()>,
    ) -> Result<()> {
        let index: Vec<usize> = self.boundary.iter().map(|t| net.node_index(&t.node).unwrap()).collect();
        for (k, &s) in scales.iter().enumerate() {
            let mut presets: Vec<Option<Vec<f64>>> = vec![None; net.nodes().len()];
            for ((&i, (_, b)), (_, p)) in index.iter().zip(&self.base.taps).zip(&at_probe.taps) {
                let mut v = pool::empty(b.len());
                v.extend(b.iter().zip(p).map(|(b, p)| b + s * (p - b)));
                presets[i] = Some(v);
            }
            let snap = run(net, &self.image, &self.taps, self.opts, &mut presets)?;
            for (t, (_, v)) in snap.taps.iter().enumerate() {
                f(k, t, 0, v)?;
            }
            for (_, v) in snap.taps {
                pool::recycle(v);
            }
        }
        Ok(())
    }
}

/// Exp-normalization with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut v = logits.to_vec();
    if !v.is_empty() {
        kernels::softmax_in_place(&mut v);
    }
    v
}
