use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, Rect};

/// Threshold table expected inside a dataset directory.
pub const THRESHOLD_FILE: &str = "thresholds.csv";
/// Record count of the complete masking database.
pub const FULL_SET_RECORDS: usize = 1080;

/// Fraction of the network input covered by the resampled image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalePolicy {
    #[serde(rename = "50")]
    Half,
    #[serde(rename = "66")]
    TwoThirds,
    #[default]
    #[serde(rename = "100")]
    Full,
}

impl ScalePolicy {
    pub fn coverage(self) -> f64 {
        match self {
            ScalePolicy::Half => 0.5,
            ScalePolicy::TwoThirds => 0.66,
            ScalePolicy::Full => 1.0,
        }
    }

    pub fn percent(self) -> u32 {
        match self {
            ScalePolicy::Half => 50,
            ScalePolicy::TwoThirds => 66,
            ScalePolicy::Full => 100,
        }
    }
}

impl FromStr for ScalePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_end_matches('%') {
            "50" => Ok(ScalePolicy::Half),
            "66" => Ok(ScalePolicy::TwoThirds),
            "100" => Ok(ScalePolicy::Full),
            other => Err(Error::InvalidArgument(format!(
                "unknown scale `{other}` (expected 50, 66 or 100)"
            ))),
        }
    }
}

impl fmt::Display for ScalePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.percent())
    }
}

/// Fill of the input area not covered by the image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Black,
    /// Mean pixel value of the resampled image.
    Mean,
}

impl FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "black" => Ok(PadMode::Black),
            "mean" => Ok(PadMode::Mean),
            other => Err(Error::InvalidArgument(format!(
                "unknown pad `{other}` (expected black or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingRecord {
    pub id: String,
    /// Relative to the dataset directory.
    pub file: PathBuf,
    /// Noise region in source-image pixels.
    pub region: Rect,
    pub threshold_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingDatasetManifest {
    pub root: PathBuf,
    pub records: Vec<MaskingRecord>,
    /// Ids whose image file does not exist.
    pub missing: Vec<String>,
    pub scale: ScalePolicy,
    pub pad: PadMode,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    file: String,
    x: usize,
    y: usize,
    width: usize,
    height: usize,
    threshold_db: f64,
}

/// Reads `thresholds.csv` (columns `id,file,x,y,width,height,threshold_db`)
/// from `dir` and validates every record against its image header.
pub fn ingest_masking_dataset(dir: impl AsRef<Path>) -> Result<MaskingDatasetManifest> {
    let root = dir.as_ref().to_path_buf();
    if !root.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", root.display())));
    }
    let csv_path = root.join(THRESHOLD_FILE);
    if !csv_path.is_file() {
        return Err(Error::Dataset(format!(
            "{}: no {THRESHOLD_FILE} found; 0 records",
            root.display()
        )));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&csv_path)?;
    let mut records = Vec::new();
    let mut missing = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in reader.deserialize::<RawRecord>().enumerate() {
        let line = i + 2;
        let bad = |msg: String| Error::Dataset(format!("{} line {line}: {msg}", csv_path.display()));
        let raw = raw.map_err(|e| bad(e.to_string()))?;
        if !raw.threshold_db.is_finite() {
            return Err(bad(format!("threshold `{}` is not finite", raw.threshold_db)));
        }
        if raw.width == 0 || raw.height == 0 {
            return Err(bad("noise region is empty".into()));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(bad(format!("duplicate id `{}`", raw.id)));
        }
        let region = Rect::new(raw.x, raw.y, raw.width, raw.height);
        let path = root.join(&raw.file);
        if path.is_file() {
            let (w, h) = image::image_dimensions(&path).map_err(|e| bad(format!("{}: {e}", raw.file)))?;
            if !region.fits_in(w as usize, h as usize) {
                return Err(bad(format!(
                    "region {}x{} at ({},{}) exceeds the {w}x{h} image",
                    raw.width, raw.height, raw.x, raw.y
                )));
            }
        } else {
            missing.push(raw.id.clone());
        }
        records.push(MaskingRecord {
            id: raw.id,
            file: PathBuf::from(raw.file),
            region,
            threshold_db: raw.threshold_db,
        });
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!("{}: 0 records", csv_path.display())));
    }
    Ok(MaskingDatasetManifest {
        root,
        records,
        missing,
        scale: ScalePolicy::default(),
        pad: PadMode::default(),
    })
}

impl MaskingDatasetManifest {
    pub fn with_scale(mut self, scale: ScalePolicy) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_pad(mut self, pad: PadMode) -> Self {
        self.pad = pad;
        self
    }

    pub fn is_full_set(&self) -> bool {
        self.records.len() == FULL_SET_RECORDS
    }

    pub fn is_missing(&self, id: &str) -> bool {
        self.missing.iter().any(|m| m == id)
    }

    /// Loads a record as a network input of `width`x`height`x`channels`
    /// under the scale policy, with its noise region mapped accordingly.
    pub fn load(
        &self,
        rec: &MaskingRecord,
        width: usize,
        height: usize,
        channels: usize,
    ) -> Result<(ImagePlane, Rect)> {
        let src = ImagePlane::load(self.root.join(&rec.file), channels)?;
        fit_to_input(&src, &rec.region, self.scale, self.pad, width, height)
    }
}

/// Resamples `src` so its longer side covers `coverage` of the input and
/// centers it, filling the rest per `pad`.
pub fn fit_to_input(
    src: &ImagePlane,
    region: &Rect,
    scale: ScalePolicy,
    pad: PadMode,
    width: usize,
    height: usize,
) -> Result<(ImagePlane, Rect)> {
    let f = scale.coverage() * (width as f64 / src.width() as f64).min(height as f64 / src.height() as f64);
    let w = ((src.width() as f64 * f).round() as usize).clamp(1, width);
    let h = ((src.height() as f64 * f).round() as usize).clamp(1, height);
    let resized = src.resize_bilinear(w, h);
    let fill = match pad {
        PadMode::Black => 0.0,
        PadMode::Mean => resized.data().iter().sum::<f64>() / resized.data().len() as f64,
    };
    let (ox, oy) = ((width - w) / 2, (height - h) / 2);
    let img = resized.paste_into(width, height, ox, oy, fill)?;
    let (fx, fy) = (w as f64 / src.width() as f64, h as f64 / src.height() as f64);
    let x0 = (region.x as f64 * fx).round() as usize;
    let y0 = (region.y as f64 * fy).round() as usize;
    let x1 = (((region.x + region.width) as f64 * fx).round() as usize).clamp(x0 + 1, w);
    let y1 = (((region.y + region.height) as f64 * fy).round() as usize).clamp(y0 + 1, h);
    Ok((img, Rect::new(ox + x0, oy + y0, x1 - x0, y1 - y0)))
}
