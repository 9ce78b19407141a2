use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Version of the CSV column layout and sidecar schema.
pub const FORMAT_VERSION: u32 = 1;

pub const COLUMNS: [&str; 9] = [
    "experiment",
    "model",
    "config_id",
    "tap",
    "condition",
    "level_or_contrast",
    "frequency",
    "value",
    "seed",
];

/// One scalar metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub experiment: String,
    pub model: String,
    pub config_id: String,
    pub tap: String,
    pub condition: String,
    /// Noise level in dB or grating contrast; empty when not applicable.
    pub level_or_contrast: Option<f64>,
    /// Cycles per image width; empty when not applicable.
    pub frequency: Option<f64>,
    pub value: f64,
    pub seed: u64,
}

/// Rows in emission order. Floats are written in shortest round-trip form,
/// so reading a table back reproduces every value bit for bit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_bytes()?)?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != COLUMNS {
            return Err(Error::Dataset(format!(
                "{}: expected columns {}, found {}",
                path.display(),
                COLUMNS.join(","),
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize().enumerate() {
            rows.push(rec.map_err(|e| Error::Dataset(format!("{} line {}: {e}", path.display(), i + 2)))?);
        }
        Ok(Self { rows })
    }

    /// Rows matching `tap` and `condition` whose level and frequency are empty.
    pub fn scalars<'a>(&'a self, tap: &'a str, condition: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.tap == tap && r.condition == condition && r.level_or_contrast.is_none() && r.frequency.is_none()
        })
    }
}

/// SHA-256 of the canonical (key-sorted, compact) JSON form of `value`.
pub fn config_hash(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Provenance written next to a table: `run.csv` gets `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub experiment: String,
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
    pub options: Value,
    pub columns: Vec<String>,
    pub rows: usize,
    /// Suggested plots over the table; data only.
    pub plots: Vec<PlotHint>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotHint {
    pub kind: String,
    pub x: String,
    pub y: String,
    /// Row filter as `column=value` pairs.
    pub filter: Vec<String>,
    pub group_by: Vec<String>,
}

impl PlotHint {
    pub fn new(kind: &str, x: &str, y: &str, filter: &[&str], group_by: &[&str]) -> Self {
        Self {
            kind: kind.into(),
            x: x.into(),
            y: y.into(),
            filter: filter.iter().map(|s| s.to_string()).collect(),
            group_by: group_by.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

impl Sidecar {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}
