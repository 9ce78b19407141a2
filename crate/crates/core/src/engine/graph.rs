use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::kernels::FftConvPlan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub out_channels: usize,
    /// Total input channels (all groups).
    pub in_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub groups: usize,
    /// `[out][in / groups][kh][kw]`, applied as cross-correlation.
    pub weight: Vec<f32>,
    /// Empty or one entry per output channel.
    pub bias: Vec<f32>,
}

impl Conv2d {
    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }
    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullyConnected {
    pub out_features: usize,
    pub in_features: usize,
    /// `[out][in]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Pooling window; padded positions never contribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    #[serde(default)]
    pub pad: (usize, usize),
}

/// Cross-channel local response normalization,
/// `y = x / (k + alpha / size * sum x^2)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lrn {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

/// Inference-form batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input(Shape),
    Conv2d(Conv2d),
    FullyConnected(FullyConnected),
    Relu,
    MaxPool(Pool),
    AvgPool(Pool),
    Lrn(Lrn),
    BatchNorm(BatchNorm),
    Add,
    Concat,
    /// Normalizes across channels at every spatial position.
    Softmax,
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Conv2d(_) => "conv2d",
            Op::FullyConnected(_) => "fully_connected",
            Op::Relu => "relu",
            Op::MaxPool(_) => "max_pool",
            Op::AvgPool(_) => "avg_pool",
            Op::Lrn(_) => "lrn",
            Op::BatchNorm(_) => "batch_norm",
            Op::Add => "add",
            Op::Concat => "channel_concat",
            Op::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub op: Op,
    pub inputs: Vec<String>,
}

/// Per-channel input transform `(pixel - mean[c]) * scale`, optionally
/// reversing channel order first (RGB to BGR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    #[serde(default)]
    pub mean: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub bgr: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            mean: Vec::new(),
            scale: 1.0,
            bgr: false,
        }
    }
}

impl Preprocess {
    pub fn mean_pixel(mean: f64) -> Self {
        Self {
            mean: vec![mean],
            ..Self::default()
        }
    }

    pub(crate) fn mean_for(&self, c: usize) -> f64 {
        match self.mean.len() {
            0 => 0.0,
            1 => self.mean[0],
            _ => self.mean[c],
        }
    }
}

/// Validated, immutable feed-forward graph.
///
/// Shapes are inferred once at construction. Large-kernel convolutions
/// lazily cache their kernel spectra, so a graph can be shared across
/// threads and each forward pass only allocates its own buffers.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    name: String,
    nodes: Vec<Node>,
    preprocess: Preprocess,
    default_taps: Option<Vec<String>>,
    order: Vec<usize>,
    shapes: Vec<Shape>,
    index: HashMap<String, usize>,
    input: usize,
    output: usize,
    pub(crate) fft_plans: Vec<OnceLock<FftConvPlan>>,
    pub(crate) kernel_sums: Vec<OnceLock<Vec<f64>>>,
}

impl NetworkGraph {
    pub fn new(name: impl Into<String>, nodes: Vec<Node>, preprocess: Preprocess) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::node(&n.id, "duplicate node id"));
            }
        }
        let inputs: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Input(_)))
            .map(|(i, _)| i)
            .collect();
        if inputs.len() != 1 {
            return Err(Error::Format(format!(
                "graph must have exactly one input node, found {}",
                inputs.len()
            )));
        }
        for n in &nodes {
            for src in &n.inputs {
                if !index.contains_key(src) {
                    return Err(Error::node(&n.id, format!("unknown input `{src}`")));
                }
            }
            let arity_ok = match n.op {
                Op::Input(_) => n.inputs.is_empty(),
                Op::Add => n.inputs.len() >= 2,
                Op::Concat => !n.inputs.is_empty(),
                _ => n.inputs.len() == 1,
            };
            if !arity_ok {
                return Err(Error::node(
                    &n.id,
                    format!("{} node cannot take {} inputs", n.op.kind(), n.inputs.len()),
                ));
            }
        }

        let order = topological_order(&nodes, &index)?;
        let mut consumed = HashSet::new();
        for n in &nodes {
            for src in &n.inputs {
                consumed.insert(index[src]);
            }
        }
        let sinks: Vec<usize> = (0..nodes.len()).filter(|i| !consumed.contains(i)).collect();
        if sinks.len() != 1 {
            let names: Vec<&str> = sinks.iter().map(|&i| nodes[i].id.as_str()).collect();
            return Err(Error::Format(format!(
                "graph must have exactly one output node, found {names:?}"
            )));
        }

        let mut shapes = vec![Shape::new(0, 0, 0); nodes.len()];
        for &i in &order {
            let n = &nodes[i];
            let ins: Vec<Shape> = n.inputs.iter().map(|s| shapes[index[s]]).collect();
            shapes[i] = infer_shape(n, &ins)?;
        }

        if let Some(c) = preprocess_channels(&preprocess) {
            let want = shapes[inputs[0]].channels;
            if c != want {
                return Err(Error::node(
                    &nodes[inputs[0]].id,
                    format!("preprocessing mean has {c} entries for {want} input channels"),
                ));
            }
        }

        let fft_plans = (0..nodes.len()).map(|_| OnceLock::new()).collect();
        let kernel_sums = (0..nodes.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            name: name.into(),
            input: inputs[0],
            output: sinks[0],
            nodes,
            preprocess,
            default_taps: None,
            order,
            shapes,
            index,
            fft_plans,
            kernel_sums,
        })
    }

    pub fn with_default_taps(mut self, taps: Vec<String>) -> Result<Self> {
        for t in &taps {
            if !self.index.contains_key(t) {
                return Err(Error::node(t, "default tap names an unknown node"));
            }
        }
        self.default_taps = Some(taps);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn preprocess(&self) -> &Preprocess {
        &self.preprocess
    }
    pub fn declared_default_taps(&self) -> Option<&[String]> {
        self.default_taps.as_deref()
    }
    pub fn order(&self) -> &[usize] {
        &self.order
    }
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }
    pub fn shape_of(&self, id: &str) -> Option<Shape> {
        self.node_index(id).map(|i| self.shapes[i])
    }
    pub(crate) fn shape_at(&self, i: usize) -> Shape {
        self.shapes[i]
    }
    pub fn input_node(&self) -> &Node {
        &self.nodes[self.input]
    }
    pub fn input_shape(&self) -> Shape {
        self.shapes[self.input]
    }
    pub fn output_node(&self) -> &Node {
        &self.nodes[self.output]
    }

    /// Rebuilds the graph from modified nodes (drops cached plans).
    pub fn map_nodes(&self, f: impl FnMut(usize, &Node) -> Node) -> Result<Self> {
        let nodes = self.nodes.iter().enumerate().map({
            let mut f = f;
            move |(i, n)| f(i, n)
        });
        let g = Self::new(self.name.clone(), nodes.collect(), self.preprocess.clone())?;
        match &self.default_taps {
            Some(t) => g.with_default_taps(t.clone()),
            None => Ok(g),
        }
    }
}

fn preprocess_channels(p: &Preprocess) -> Option<usize> {
    (p.mean.len() > 1).then_some(p.mean.len())
}

fn topological_order(nodes: &[Node], index: &HashMap<String, usize>) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut indegree = vec![0usize; n];
    let mut users = vec![Vec::new(); n];
    for (i, node) in nodes.iter().enumerate() {
        for src in &node.inputs {
            let s = index[src];
            indegree[i] += 1;
            users[s].push(i);
        }
    }
    // Kahn's algorithm, always taking the lowest ready index so the order
    // is stable with respect to file order.
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        order.push(i);
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
        return Err(Error::node(&nodes[stuck].id, "graph contains a cycle"));
    }
    Ok(order)
}

fn window_out(len: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    if s == 0 || k == 0 || len + 2 * p < k {
        return None;
    }
    Some((len + 2 * p - k) / s + 1)
}

fn infer_shape(n: &Node, ins: &[Shape]) -> Result<Shape> {
    let err = |m: String| Error::node(&n.id, m);
    match &n.op {
        Op::Input(s) => {
            if s.is_empty() {
                return Err(err("input shape must be non-empty".into()));
            }
            Ok(*s)
        }
        Op::Conv2d(c) => {
            let x = ins[0];
            if c.groups == 0 || c.in_channels % c.groups != 0 || c.out_channels % c.groups != 0 {
                return Err(err(format!(
                    "groups {} must divide in {} and out {} channels",
                    c.groups, c.in_channels, c.out_channels
                )));
            }
            if x.channels != c.in_channels {
                return Err(err(format!(
                    "expects {} input channels, got {}",
                    c.in_channels, x.channels
                )));
            }
            let want = c.out_channels * c.in_per_group() * c.kernel.0 * c.kernel.1;
            if c.weight.len() != want {
                return Err(err(format!("weight has {} values, expected {want}", c.weight.len())));
            }
            if !c.bias.is_empty() && c.bias.len() != c.out_channels {
                return Err(err(format!(
                    "bias has {} values, expected {}",
                    c.bias.len(),
                    c.out_channels
                )));
            }
            let h = window_out(x.height, c.kernel.0, c.stride.0, c.pad.0);
            let w = window_out(x.width, c.kernel.1, c.stride.1, c.pad.1);
            match (h, w) {
                (Some(h), Some(w)) => Ok(Shape::new(c.out_channels, h, w)),
                _ => Err(err(format!("kernel {:?} does not fit input {x:?}", c.kernel))),
            }
        }
        Op::FullyConnected(f) => {
            if ins[0].len() != f.in_features {
                return Err(err(format!(
                    "expects {} input features, got {}",
                    f.in_features,
                    ins[0].len()
                )));
            }
            if f.weight.len() != f.out_features * f.in_features {
                return Err(err(format!(
                    "weight has {} values, expected {}",
                    f.weight.len(),
                    f.out_features * f.in_features
                )));
            }
            if !f.bias.is_empty() && f.bias.len() != f.out_features {
                return Err(err(format!(
                    "bias has {} values, expected {}",
                    f.bias.len(),
                    f.out_features
                )));
            }
            Ok(Shape::new(f.out_features, 1, 1))
        }
        Op::Relu | Op::Softmax => Ok(ins[0]),
        Op::MaxPool(p) | Op::AvgPool(p) => {
            let x = ins[0];
            if p.pad.0 >= p.kernel.0 || p.pad.1 >= p.kernel.1 {
                return Err(err("pool padding must be smaller than the window".into()));
            }
            let h = window_out(x.height, p.kernel.0, p.stride.0, p.pad.0);
            let w = window_out(x.width, p.kernel.1, p.stride.1, p.pad.1);
            match (h, w) {
                (Some(h), Some(w)) => Ok(Shape::new(x.channels, h, w)),
                _ => Err(err(format!("window {:?} does not fit input {x:?}", p.kernel))),
            }
        }
        Op::Lrn(l) => {
            if l.size == 0 || l.size % 2 == 0 {
                return Err(err(format!("LRN size must be odd, got {}", l.size)));
            }
            Ok(ins[0])
        }
        Op::BatchNorm(b) => {
            let c = ins[0].channels;
            if [b.mean.len(), b.var.len(), b.gamma.len(), b.beta.len()]
                .iter()
                .any(|&l| l != c)
            {
                return Err(err(format!("batch-norm parameters must have {c} entries")));
            }
            if b.var.iter().any(|&v| (v as f64) + b.eps <= 0.0) {
                return Err(err("batch-norm variance + eps must be positive".into()));
            }
            Ok(ins[0])
        }
        Op::Add => {
            if ins.iter().any(|s| *s != ins[0]) {
                return Err(err(format!("add inputs disagree in shape: {ins:?}")));
            }
            Ok(ins[0])
        }
        Op::Concat => {
            let (h, w) = (ins[0].height, ins[0].width);
            if ins.iter().any(|s| s.height != h || s.width != w) {
                return Err(err(format!("concat inputs disagree spatially: {ins:?}")));
            }
            Ok(Shape::new(ins.iter().map(|s| s.channels).sum(), h, w))
        }
    }
}

/// Incremental graph construction for hand-built models.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: String,
    nodes: Vec<Node>,
}

impl GraphBuilder {
    /// Starts a graph whose input node is called `data`.
    pub fn new(name: impl Into<String>, input: Shape) -> Self {
        Self {
            name: name.into(),
            nodes: vec![Node {
                id: "data".into(),
                op: Op::Input(input),
                inputs: vec![],
            }],
        }
    }

    pub fn push(&mut self, id: impl Into<String>, op: Op, inputs: &[&str]) -> String {
        let id = id.into();
        self.nodes.push(Node {
            id: id.clone(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        });
        id
    }

    pub fn build(self, preprocess: Preprocess) -> Result<NetworkGraph> {
        NetworkGraph::new(self.name, self.nodes, preprocess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(out: usize, inp: usize, k: usize) -> Op {
        Op::Conv2d(Conv2d {
            out_channels: out,
            in_channels: inp,
            kernel: (k, k),
            stride: (1, 1),
            pad: (0, 0),
            groups: 1,
            weight: vec![0.0; out * inp * k * k],
            bias: vec![],
        })
    }

    #[test]
    fn shape_inference_chain() {
        let mut b = GraphBuilder::new("t", Shape::new(3, 8, 8));
        b.push("c1", conv(4, 3, 3), &["data"]);
        b.push(
            "p1",
            Op::MaxPool(Pool {
                kernel: (2, 2),
                stride: (2, 2),
                pad: (0, 0),
            }),
            &["c1"],
        );
        b.push(
            "fc",
            Op::FullyConnected(FullyConnected {
                out_features: 5,
                in_features: 36,
                weight: vec![0.0; 180],
                bias: vec![],
            }),
            &["p1"],
        );
        b.push("prob", Op::Softmax, &["fc"]);
        let g = b.build(Preprocess::default()).unwrap();
        assert_eq!(g.shape_of("c1"), Some(Shape::new(4, 6, 6)));
        assert_eq!(g.shape_of("p1"), Some(Shape::new(4, 3, 3)));
        assert_eq!(g.shape_of("prob"), Some(Shape::new(5, 1, 1)));
        assert_eq!(g.output_node().id, "prob");
    }

    #[test]
    fn mismatch_names_the_node() {
        let mut b = GraphBuilder::new("t", Shape::new(3, 8, 8));
        b.push("c1", conv(4, 2, 3), &["data"]);
        let e = b.build(Preprocess::default()).unwrap_err();
        assert!(matches!(e, Error::Node { ref node, .. } if node == "c1"), "{e}");
    }

    #[test]
    fn cycles_and_dangling_outputs_rejected() {
        let nodes = vec![
            Node {
                id: "data".into(),
                op: Op::Input(Shape::new(1, 2, 2)),
                inputs: vec![],
            },
            Node {
                id: "a".into(),
                op: Op::Add,
                inputs: vec!["data".into(), "b".into()],
            },
            Node {
                id: "b".into(),
                op: Op::Relu,
                inputs: vec!["a".into()],
            },
        ];
        assert!(NetworkGraph::new("c", nodes, Preprocess::default()).is_err());

        let mut b = GraphBuilder::new("t", Shape::new(1, 2, 2));
        b.push("r1", Op::Relu, &["data"]);
        b.push("r2", Op::Relu, &["data"]);
        assert!(b.build(Preprocess::default()).is_err());
    }
}
