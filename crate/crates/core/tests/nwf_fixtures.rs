use std::path::PathBuf;

use percept_core::engine::{default_taps, forward, from_bytes, load_network, to_bytes, Op};
use percept_core::{Error, ImagePlane};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn splice_manifest(bytes: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    f(&mut manifest);
    let json = serde_json::to_vec(&manifest).unwrap();
    let mut out = bytes[..8].to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[16 + len..]);
    out
}

#[test]
fn minimal_has_three_nodes() {
    let net = load_network(fixture("minimal.nwf")).unwrap();
    let kinds: Vec<&str> = net.nodes().iter().map(|n| n.op.kind()).collect();
    assert_eq!(kinds, ["input", "conv2d", "softmax"]);
    let img = ImagePlane::filled(4, 4, 1, 10.0);
    let snap = forward(&net, &img, &default_taps(&net)).unwrap();
    let prob = snap.taps.last().unwrap().1.clone();
    assert_eq!(prob.len(), 3);
    assert!((prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn fixtures_forward_finite_and_reencode_identically() {
    for (name, size) in [("minimal.nwf", 4), ("toy.nwf", 8), ("tiny-vgg.nwf", 16)] {
        let bytes = std::fs::read(fixture(name)).unwrap();
        let net = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&net).unwrap(), bytes, "{name}");
        let ch = net.input_shape().channels;
        let data = (0..size * size * ch).map(|i| (i * 37 % 256) as f64).collect();
        let img = ImagePlane::from_data(size, size, ch, data).unwrap();
        let snap = forward(&net, &img, &default_taps(&net)).unwrap();
        assert!(snap.taps.iter().all(|(_, v)| v.iter().all(|x| x.is_finite())), "{name}");
    }
}

#[test]
fn tiny_vgg_default_taps() {
    let net = load_network(fixture("tiny-vgg.nwf")).unwrap();
    let taps: Vec<String> = default_taps(&net).into_iter().map(|t| t.stage).collect();
    assert_eq!(taps, ["data", "conv1_1", "conv2_1", "fc6", "prob"]);
    assert!(net.nodes().iter().any(|n| matches!(n.op, Op::MaxPool(_))));
}

#[test]
fn truncated_blob_is_a_digest_error() {
    let bytes = std::fs::read(fixture("toy.nwf")).unwrap();
    let cut = &bytes[..bytes.len() - 4];
    assert!(matches!(from_bytes(cut), Err(Error::Digest { .. })));
}

#[test]
fn unknown_op_is_named() {
    let bytes = std::fs::read(fixture("toy.nwf")).unwrap();
    let edited = splice_manifest(&bytes, |m| m["nodes"][2]["op"] = "gelu".into());
    match from_bytes(&edited) {
        Err(Error::UnsupportedOp { node, kind }) => {
            assert_eq!(kind, "gelu");
            assert_eq!(node, "relu1");
        }
        other => panic!("expected UnsupportedOp, got {other:?}"),
    }
}
