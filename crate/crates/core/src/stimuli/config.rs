use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::font::Font;
use super::patterns::{
    enumerate_configs_with, Paradigm, ParadigmGrid, PatternConfig, PatternGeometry, PatternRenderer, ShapeLayouts,
};
use crate::error::{Error, Result};

/// Stimulus configuration file (TOML or JSON).
///
/// ```toml
/// paradigm = "crowding"
/// master_seed = 7
/// [geometry]
/// canvas = 112
/// [grid]
/// element_sizes = [15.1, 20.6, 32.4]
/// jitter_multipliers = [1, 2, 3]
/// locations = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StimulusConfig {
    pub paradigm: Paradigm,
    pub master_seed: u64,
    pub geometry: PatternGeometry,
    /// Replaces the paradigm's default scale / jitter / location grid.
    pub grid: Option<ParadigmGrid>,
    pub samples_per_category: usize,
    /// Extra or replacement 5x7 glyphs.
    pub glyphs: Option<BTreeMap<char, Vec<String>>>,
    /// Replacement shape layout file.
    pub shape_layouts: Option<PathBuf>,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::Segmentation,
            master_seed: 0,
            geometry: PatternGeometry::default(),
            grid: None,
            samples_per_category: 1,
            glyphs: None,
            shape_layouts: None,
        }
    }
}

impl StimulusConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
            Some("json") => Ok(serde_json::from_str(&text)?),
            _ => Err(Error::Config(format!(
                "{}: expected a .toml or .json stimulus config",
                path.display()
            ))),
        }
    }

    pub fn grid(&self) -> ParadigmGrid {
        self.grid.clone().unwrap_or_else(|| self.paradigm.default_grid())
    }

    pub fn configs(&self) -> Vec<PatternConfig> {
        enumerate_configs_with(self.paradigm, &self.grid())
    }

    pub fn renderer(&self) -> Result<PatternRenderer> {
        let mut font = Font::default();
        if let Some(extra) = &self.glyphs {
            font.glyphs.extend(extra.clone());
            font.validate()?;
        }
        let layouts = match &self.shape_layouts {
            Some(p) => ShapeLayouts::load(p)?,
            None => ShapeLayouts::default(),
        };
        Ok(PatternRenderer {
            geometry: self.geometry.clone(),
            font,
            layouts,
        })
    }
}
