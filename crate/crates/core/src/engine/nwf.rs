//! NWF v1 container: magic, JSON manifest, little-endian `f32` blob.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::graph::{BatchNorm, Conv2d, FullyConnected, Lrn, NetworkGraph, Node, Op, Pool, Preprocess, Shape};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NWFv0001";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_taps: Option<Vec<String>>,
    pub nodes: Vec<NodeRecord>,
    pub blob: BlobRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub op: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "is_empty_object")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tensors: BTreeMap<String, TensorRecord>,
}

fn is_empty_object(v: &Value) -> bool {
    v.is_null() || v.as_object().is_some_and(|o| o.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    /// Byte offset into the blob; must be a multiple of 4.
    pub offset: u64,
    pub shape: Vec<usize>,
}

impl TensorRecord {
    fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobRecord {
    pub length: u64,
    pub sha256: String,
}

#[derive(Deserialize)]
struct InputParams {
    channels: usize,
    height: usize,
    width: usize,
}

#[derive(Deserialize)]
struct ConvParams {
    out_channels: usize,
    in_channels: usize,
    kernel: (usize, usize),
    #[serde(default = "unit")]
    stride: (usize, usize),
    #[serde(default)]
    pad: (usize, usize),
    #[serde(default = "one")]
    groups: usize,
}

#[derive(Deserialize)]
struct FcParams {
    out_features: usize,
    in_features: usize,
}

#[derive(Deserialize)]
struct BnParams {
    #[serde(default = "default_eps")]
    eps: f64,
}

fn unit() -> (usize, usize) {
    (1, 1)
}
fn one() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-5
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkGraph> {
    let bytes = std::fs::read(path.as_ref())?;
    from_bytes(&bytes)
}

pub fn save_network(net: &NetworkGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), to_bytes(net)?)?;
    Ok(())
}

/// Splits a container into its manifest and blob after checking the magic,
/// version and blob digest.
pub fn read_container(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    if bytes.len() < 16 {
        return Err(Error::Format("file too short for an NWF header".into()));
    }
    if &bytes[..4] != b"NWFv" {
        return Err(Error::Format("bad magic, not an NWF file".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format(format!(
            "unsupported NWF version `{}`",
            String::from_utf8_lossy(&bytes[4..8])
        )));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let end = 16u64
        .checked_add(len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| Error::Format("manifest length exceeds file size".into()))? as usize;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| Error::Format(format!("malformed manifest: {e}")))?;
    if manifest.format != "NWF" || manifest.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let blob = &bytes[end..];
    let actual = hex::encode(Sha256::digest(blob));
    if !actual.eq_ignore_ascii_case(&manifest.blob.sha256) {
        return Err(Error::Digest {
            expected: manifest.blob.sha256.clone(),
            actual,
        });
    }
    if blob.len() as u64 != manifest.blob.length {
        return Err(Error::Format(format!(
            "blob is {} bytes, manifest declares {}",
            blob.len(),
            manifest.blob.length
        )));
    }
    Ok((manifest, blob))
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetworkGraph> {
    let (manifest, blob) = read_container(bytes)?;
    let nodes = manifest
        .nodes
        .iter()
        .map(|r| decode_node(r, blob))
        .collect::<Result<Vec<_>>>()?;
    let g = NetworkGraph::new(manifest.name, nodes, manifest.preprocess)?;
    match manifest.default_taps {
        Some(t) => g.with_default_taps(t),
        None => Ok(g),
    }
}

fn params<T: serde::de::DeserializeOwned>(r: &NodeRecord) -> Result<T> {
    let v = if r.params.is_null() {
        json!({})
    } else {
        r.params.clone()
    };
    serde_json::from_value(v).map_err(|e| Error::node(&r.id, format!("bad params: {e}")))
}

fn tensor(r: &NodeRecord, blob: &[u8], name: &str, shape: &[usize], required: bool) -> Result<Vec<f32>> {
    let Some(t) = r.tensors.get(name) else {
        if required {
            return Err(Error::node(&r.id, format!("missing tensor `{name}`")));
        }
        return Ok(Vec::new());
    };
    if t.elements() != shape.iter().product::<usize>() {
        return Err(Error::node(
            &r.id,
            format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape),
        ));
    }
    if t.offset % 4 != 0 {
        return Err(Error::node(
            &r.id,
            format!("tensor `{name}` offset is not 4-byte aligned"),
        ));
    }
    let start = t.offset as usize;
    let end = start
        .checked_add(4 * t.elements())
        .filter(|&e| e <= blob.len())
        .ok_or_else(|| Error::node(&r.id, format!("tensor `{name}` lies outside the blob")))?;
    let out: Vec<f32> = blob[start..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::node(
            &r.id,
            format!("tensor `{name}` contains non-finite values"),
        ));
    }
    Ok(out)
}

fn decode_node(r: &NodeRecord, blob: &[u8]) -> Result<Node> {
    let op = match r.op.as_str() {
        "input" => {
            let p: InputParams = params(r)?;
            Op::Input(Shape::new(p.channels, p.height, p.width))
        }
        "conv2d" => {
            let p: ConvParams = params(r)?;
            if p.groups == 0 || !p.in_channels.is_multiple_of(p.groups) {
                return Err(Error::node(&r.id, "groups must divide in_channels"));
            }
            let wshape = [p.out_channels, p.in_channels / p.groups, p.kernel.0, p.kernel.1];
            Op::Conv2d(Conv2d {
                weight: tensor(r, blob, "weight", &wshape, true)?,
                bias: tensor(r, blob, "bias", &[p.out_channels], false)?,
                out_channels: p.out_channels,
                in_channels: p.in_channels,
                kernel: p.kernel,
                stride: p.stride,
                pad: p.pad,
                groups: p.groups,
            })
        }
        "fully_connected" => {
            let p: FcParams = params(r)?;
            Op::FullyConnected(FullyConnected {
                weight: tensor(r, blob, "weight", &[p.out_features, p.in_features], true)?,
                bias: tensor(r, blob, "bias", &[p.out_features], false)?,
                out_features: p.out_features,
                in_features: p.in_features,
            })
        }
        "relu" => Op::Relu,
        "max_pool" => Op::MaxPool(params::<Pool>(r)?),
        "avg_pool" => Op::AvgPool(params::<Pool>(r)?),
        "lrn" => Op::Lrn(params::<Lrn>(r)?),
        "batch_norm" => {
            let p: BnParams = params(r)?;
            let c = r
                .tensors
                .get("mean")
                .map(|t| t.elements())
                .ok_or_else(|| Error::node(&r.id, "missing tensor `mean`"))?;
            Op::BatchNorm(BatchNorm {
                mean: tensor(r, blob, "mean", &[c], true)?,
                var: tensor(r, blob, "var", &[c], true)?,
                gamma: tensor(r, blob, "gamma", &[c], true)?,
                beta: tensor(r, blob, "beta", &[c], true)?,
                eps: p.eps,
            })
        }
        "add" => Op::Add,
        "channel_concat" => Op::Concat,
        "softmax" => Op::Softmax,
        other => {
            return Err(Error::UnsupportedOp {
                node: r.id.clone(),
                kind: other.to_string(),
            })
        }
    };
    Ok(Node {
        id: r.id.clone(),
        op,
        inputs: r.inputs.clone(),
    })
}

struct BlobWriter {
    bytes: Vec<u8>,
}

impl BlobWriter {
    fn put(&mut self, values: &[f32], shape: Vec<usize>) -> TensorRecord {
        let offset = self.bytes.len() as u64;
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        TensorRecord { offset, shape }
    }
}

fn encode_node(n: &Node, blob: &mut BlobWriter) -> NodeRecord {
    let mut tensors = BTreeMap::new();
    let params = match &n.op {
        Op::Input(s) => json!({"channels": s.channels, "height": s.height, "width": s.width}),
        Op::Conv2d(c) => {
            let ws = vec![c.out_channels, c.in_per_group(), c.kernel.0, c.kernel.1];
            tensors.insert("weight".to_string(), blob.put(&c.weight, ws));
            if !c.bias.is_empty() {
                tensors.insert("bias".to_string(), blob.put(&c.bias, vec![c.out_channels]));
            }
            json!({
                "out_channels": c.out_channels,
                "in_channels": c.in_channels,
                "kernel": [c.kernel.0, c.kernel.1],
                "stride": [c.stride.0, c.stride.1],
                "pad": [c.pad.0, c.pad.1],
                "groups": c.groups,
            })
        }
        Op::FullyConnected(f) => {
            let ws = vec![f.out_features, f.in_features];
            tensors.insert("weight".to_string(), blob.put(&f.weight, ws));
            if !f.bias.is_empty() {
                tensors.insert("bias".to_string(), blob.put(&f.bias, vec![f.out_features]));
            }
            json!({"out_features": f.out_features, "in_features": f.in_features})
        }
        Op::MaxPool(p) | Op::AvgPool(p) => serde_json::to_value(p).expect("pool params serialize"),
        Op::Lrn(l) => serde_json::to_value(l).expect("lrn params serialize"),
        Op::BatchNorm(b) => {
            let c = b.mean.len();
            for (name, v) in [
                ("mean", &b.mean),
                ("var", &b.var),
                ("gamma", &b.gamma),
                ("beta", &b.beta),
            ] {
                tensors.insert(name.to_string(), blob.put(v, vec![c]));
            }
            json!({"eps": b.eps})
        }
        Op::Relu | Op::Add | Op::Concat | Op::Softmax => Value::Null,
    };
    NodeRecord {
        id: n.id.clone(),
        op: n.op.kind().to_string(),
        inputs: n.inputs.clone(),
        params,
        tensors,
    }
}

/// Serializes a graph; identical graphs always produce identical bytes.
pub fn to_bytes(net: &NetworkGraph) -> Result<Vec<u8>> {
    let mut blob = BlobWriter { bytes: Vec::new() };
    let nodes: Vec<NodeRecord> = net.nodes().iter().map(|n| encode_node(n, &mut blob)).collect();
    let manifest = Manifest {
        format: "NWF".into(),
        version: FORMAT_VERSION,
        name: net.name().to_string(),
        preprocess: net.preprocess().clone(),
        default_taps: net.declared_default_taps().map(|t| t.to_vec()),
        nodes,
        blob: BlobRecord {
            length: blob.bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&blob.bytes)),
        },
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + blob.bytes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob.bytes);
    Ok(out)
}
