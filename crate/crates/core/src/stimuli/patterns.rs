//! Segmentation, crowding and shape line patterns.
//!
//! Element sizes and jitter amplitudes are given in pixels of a 224-px
//! reference canvas and scale with the working canvas. All geometry is
//! snapped to integer pixels before jitter is applied, so jittered elements
//! are exact translates of their nominal rasters.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::font::Font;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::seed;

pub const REFERENCE_CANVAS: usize = 224;
const JITTER_UNIT: f64 = 0.0625;
const CROWDING_TARGETS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];
const CROWDING_SURROUND: [char; 4] = ['M', 'N', 'S', 'T'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Segmentation,
    Crowding,
    Shape,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Segmentation, Paradigm::Crowding, Paradigm::Shape];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Segmentation => "segmentation",
            Paradigm::Crowding => "crowding",
            Paradigm::Shape => "shape",
        }
    }

    /// Size of the category variable: arrangement (horizontal / vertical),
    /// target letter (A..F), or target-line location (4).
    pub fn category_count(self) -> usize {
        match self {
            Paradigm::Segmentation => 2,
            Paradigm::Crowding => 6,
            Paradigm::Shape => 4,
        }
    }

    pub fn default_grid(self) -> ParadigmGrid {
        match self {
            Paradigm::Segmentation => ParadigmGrid {
                element_sizes: vec![9.0, 12.3, 19.4],
                jitter_multipliers: vec![1.0, 2.0, 3.0],
                locations: 10,
            },
            Paradigm::Crowding => ParadigmGrid {
                element_sizes: vec![15.1, 20.6, 32.4],
                jitter_multipliers: vec![1.0, 2.0, 3.0],
                locations: 10,
            },
            Paradigm::Shape => ParadigmGrid {
                element_sizes: vec![9.0, 15.1, 22.7],
                jitter_multipliers: vec![1.0, 2.0, 5.0, 10.0, 15.0],
                locations: 6,
            },
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "segmentation" => Ok(Paradigm::Segmentation),
            "crowding" => Ok(Paradigm::Crowding),
            "shape" => Ok(Paradigm::Shape),
            other => Err(Error::InvalidArgument(format!(
                "unknown paradigm `{other}` (expected segmentation, crowding or shape)"
            ))),
        }
    }
}

/// Scale / jitter / location alternatives of one paradigm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmGrid {
    /// Line length or font size in reference-canvas pixels.
    pub element_sizes: Vec<f64>,
    /// Jitter amplitude in units of `0.0625 * element_size`.
    pub jitter_multipliers: Vec<f64>,
    /// Target locations (segmentation, crowding) or hard layouts (shape).
    pub locations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub paradigm: Paradigm,
    pub scale_index: usize,
    pub jitter_level_index: usize,
    /// Location index (segmentation, crowding) or hard-layout index (shape).
    pub location_index: usize,
    /// Reference-canvas pixels.
    pub element_size: f64,
    pub jitter_multiplier: f64,
}

impl PatternConfig {
    pub fn id(&self) -> String {
        format!(
            "{}-s{}-j{}-l{}",
            self.paradigm, self.scale_index, self.jitter_level_index, self.location_index
        )
    }

    /// Jitter amplitude in reference-canvas pixels.
    pub fn jitter_amplitude(&self) -> f64 {
        self.jitter_multiplier * JITTER_UNIT * self.element_size
    }
}

pub fn enumerate_configs(paradigm: Paradigm) -> Vec<PatternConfig> {
    enumerate_configs_with(paradigm, &paradigm.default_grid())
}

/// Cross product scale x jitter x location, in that nesting order.
pub fn enumerate_configs_with(paradigm: Paradigm, grid: &ParadigmGrid) -> Vec<PatternConfig> {
    let mut out = Vec::new();
    for (si, &size) in grid.element_sizes.iter().enumerate() {
        for (ji, &mult) in grid.jitter_multipliers.iter().enumerate() {
            for li in 0..grid.locations {
                out.push(PatternConfig {
                    paradigm,
                    scale_index: si,
                    jitter_level_index: ji,
                    location_index: li,
                    element_size: size,
                    jitter_multiplier: mult,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Easy,
    Hard,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Easy => "easy",
            Condition::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryLabel {
    pub category: usize,
    pub condition: Condition,
}

impl CategoryLabel {
    pub fn new(category: usize, condition: Condition) -> Self {
        Self { category, condition }
    }
}

/// Canvas and spacing parameters of the renderer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternGeometry {
    pub canvas: usize,
    /// Lines per grid side for each segmentation scale.
    pub segmentation_grid: Vec<usize>,
    /// Grid pitch in line lengths.
    pub segmentation_spacing: f64,
    /// Horizontal / vertical letter pitch in font sizes.
    pub crowding_spacing: (f64, f64),
}

impl Default for PatternGeometry {
    fn default() -> Self {
        Self {
            canvas: REFERENCE_CANVAS,
            segmentation_grid: vec![13, 9, 6],
            segmentation_spacing: 1.6,
            crowding_spacing: (1.0, 1.2),
        }
    }
}

impl PatternGeometry {
    pub fn with_canvas(canvas: usize) -> Self {
        Self {
            canvas,
            ..Self::default()
        }
    }

    pub fn scale(&self) -> f64 {
        self.canvas as f64 / REFERENCE_CANVAS as f64
    }
}

/// Shape-paradigm line sets in units of the discriminated-line length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeLayouts {
    pub targets: Vec<[f64; 4]>,
    pub easy: Vec<[f64; 4]>,
    pub hard: Vec<Vec<[f64; 4]>>,
}

impl Default for ShapeLayouts {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../data/shape_layouts.json")).expect("embedded shape layouts parse")
    }
}

impl ShapeLayouts {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let layouts: Self = serde_json::from_str(&text)?;
        layouts.validate()?;
        Ok(layouts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != Paradigm::Shape.category_count() {
            return Err(Error::Config(format!(
                "shape layouts need {} target lines, found {}",
                Paradigm::Shape.category_count(),
                self.targets.len()
            )));
        }
        if self.hard.is_empty() {
            return Err(Error::Config("shape layouts need at least one hard layout".into()));
        }
        Ok(())
    }
}

/// One rendered element: its snapped nominal centre, the jitter applied and
/// the lit pixels (absolute coordinates, jitter included).
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub nominal: (i64, i64),
    pub offset: (i64, i64),
    pub pixels: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternLayout {
    pub width: usize,
    pub height: usize,
    pub elements: Vec<Element>,
    /// Largest integer jitter that may be drawn per axis.
    pub jitter_bound: i64,
}

impl PatternLayout {
    /// White-on-black rendering.
    pub fn to_image(&self) -> Result<ImagePlane> {
        let mut img = ImagePlane::zeros(self.width, self.height, 1);
        for el in &self.elements {
            for &(x, y) in &el.pixels {
                if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
                    return Err(Error::Geometry(format!(
                        "element pixel ({x},{y}) falls outside the {}x{} canvas",
                        self.width, self.height
                    )));
                }
                img.set(0, y as usize, x as usize, 255.0);
            }
        }
        Ok(img)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PatternRenderer {
    pub geometry: PatternGeometry,
    pub font: Font,
    pub layouts: ShapeLayouts,
}

impl PatternRenderer {
    pub fn new(geometry: PatternGeometry) -> Self {
        Self {
            geometry,
            ..Self::default()
        }
    }

    pub fn canvas(&self) -> usize {
        self.geometry.canvas
    }

    pub fn render(&self, config: &PatternConfig, label: CategoryLabel, seed: u64) -> Result<ImagePlane> {
        self.layout(config, label, seed)?.to_image()
    }

    pub fn layout(&self, config: &PatternConfig, label: CategoryLabel, seed: u64) -> Result<PatternLayout> {
        if label.category >= config.paradigm.category_count() {
            return Err(Error::InvalidArgument(format!(
                "category {} is not valid for {} (expected < {})",
                label.category,
                config.paradigm,
                config.paradigm.category_count()
            )));
        }
        let jitter_bound = (config.jitter_amplitude() * self.geometry.scale() + 1e-9).floor() as i64;
        let mut rng = seed::rng(seed);
        let elements = match config.paradigm {
            Paradigm::Segmentation => self.segmentation(config, label, jitter_bound, &mut rng)?,
            Paradigm::Crowding => self.crowding(config, label, jitter_bound, &mut rng)?,
            Paradigm::Shape => self.shape(config, label, jitter_bound, &mut rng)?,
        };
        let layout = PatternLayout {
            width: self.geometry.canvas,
            height: self.geometry.canvas,
            elements,
            jitter_bound,
        };
        Ok(layout)
    }

    fn segmentation(
        &self,
        config: &PatternConfig,
        label: CategoryLabel,
        jitter: i64,
        rng: &mut seed::Rng,
    ) -> Result<Vec<Element>> {
        let n = *self
            .geometry
            .segmentation_grid
            .get(config.scale_index)
            .ok_or_else(|| Error::Config(format!("no segmentation grid size for scale {}", config.scale_index)))?;
        if n < 3 {
            return Err(Error::Geometry(format!("segmentation grid {n} is too small")));
        }
        let line = config.element_size * self.geometry.scale();
        let pitch = line * self.geometry.segmentation_spacing;
        let centre = (self.geometry.canvas / 2) as f64;
        let half = (n as f64 - 1.0) / 2.0;
        let pos = |i: usize| (centre + (i as f64 - half) * pitch).round() as i64;

        let (tr, tc) = segmentation_target(n, config);
        let diagonal: Vec<(usize, usize)> = match (label.category, label.condition) {
            (0, Condition::Easy) => vec![(tr, tc - 1), (tr, tc), (tr, tc + 1)],
            (0, Condition::Hard) => vec![(tr, tc - 1), (tr, tc + 1)],
            (_, Condition::Easy) => vec![(tr - 1, tc), (tr, tc), (tr + 1, tc)],
            (_, Condition::Hard) => vec![(tr - 1, tc), (tr + 1, tc)],
        };

        let horizontal = horizontal_raster(line);
        let slanted = diagonal_raster(line);
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                // jitter is drawn for every cell in a fixed order so that the
                // draw sequence does not depend on the label
                let offset = draw_offset(rng, jitter);
                let nominal = (pos(c), pos(r));
                let shape = if diagonal.contains(&(r, c)) {
                    &slanted
                } else {
                    &horizontal
                };
                out.push(place(shape, nominal, offset));
            }
        }
        Ok(out)
    }

    fn crowding(
        &self,
        config: &PatternConfig,
        label: CategoryLabel,
        jitter: i64,
        rng: &mut seed::Rng,
    ) -> Result<Vec<Element>> {
        let size = config.element_size * self.geometry.scale();
        let gh = size.round().max(1.0) as usize;
        let gw = (size * 5.0 / 7.0).round().max(1.0) as usize;
        let pitch_x = (size * self.geometry.crowding_spacing.0).round() as i64;
        let pitch_y = (size * self.geometry.crowding_spacing.1).round() as i64;
        let (cx, cy) = crowding_target(self.geometry.canvas, config);
        let glyph = |ch: char| -> Result<Vec<(i64, i64)>> {
            let px = self.font.raster(ch, gw, gh)?;
            Ok(px
                .into_iter()
                .map(|(x, y)| (x - gw as i64 / 2, y - gh as i64 / 2))
                .collect())
        };

        let offset = draw_offset(rng, jitter);
        let mut out = vec![place(&glyph(CROWDING_TARGETS[label.category])?, (cx, cy), offset)];
        if label.condition == Condition::Hard {
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let ch = CROWDING_SURROUND[k % CROWDING_SURROUND.len()];
                    k += 1;
                    out.push(place(&glyph(ch)?, (cx + dx * pitch_x, cy + dy * pitch_y), (0, 0)));
                }
            }
        }
        Ok(out)
    }

    fn shape(
        &self,
        config: &PatternConfig,
        label: CategoryLabel,
        jitter: i64,
        rng: &mut seed::Rng,
    ) -> Result<Vec<Element>> {
        let unit = config.element_size * self.geometry.scale();
        let centre = (self.geometry.canvas / 2) as i64;
        let context = match label.condition {
            Condition::Easy => &self.layouts.easy,
            Condition::Hard => self
                .layouts
                .hard
                .get(config.location_index)
                .ok_or_else(|| Error::Config(format!("no hard shape layout {}", config.location_index)))?,
        };
        let target = self.layouts.targets[label.category];
        let offset = draw_offset(rng, jitter);
        let mut pixels = Vec::new();
        for seg in context.iter().chain(std::iter::once(&target)) {
            let p = |v: f64| (v * unit).round() as i64;
            pixels.extend(bresenham(p(seg[0]), p(seg[1]), p(seg[2]), p(seg[3])));
        }
        pixels.sort_unstable();
        pixels.dedup();
        Ok(vec![place(&pixels, (centre, centre), offset)])
    }
}

/// Convenience wrapper with default geometry at the given canvas size.
pub fn render_pattern(config: &PatternConfig, label: CategoryLabel, seed: u64, canvas: usize) -> Result<ImagePlane> {
    PatternRenderer::new(PatternGeometry::with_canvas(canvas)).render(config, label, seed)
}

fn draw_offset(rng: &mut seed::Rng, bound: i64) -> (i64, i64) {
    if bound <= 0 {
        // keep the stream aligned across jitter levels
        let _ = rng.random::<u64>();
        let _ = rng.random::<u64>();
        return (0, 0);
    }
    (rng.random_range(-bound..=bound), rng.random_range(-bound..=bound))
}

fn place(shape: &[(i64, i64)], nominal: (i64, i64), offset: (i64, i64)) -> Element {
    let (x0, y0) = (nominal.0 + offset.0, nominal.1 + offset.1);
    Element {
        nominal,
        offset,
        pixels: shape.iter().map(|&(x, y)| (x0 + x, y0 + y)).collect(),
    }
}

fn horizontal_raster(length: f64) -> Vec<(i64, i64)> {
    let n = length.round().max(1.0) as i64;
    (0..n).map(|i| (i - n / 2, 0)).collect()
}

/// "/"-oriented diagonal of the given length, one pixel per row.
fn diagonal_raster(length: f64) -> Vec<(i64, i64)> {
    let n = (length / std::f64::consts::SQRT_2).round().max(1.0) as i64;
    (0..n).map(|i| (i - n / 2, n / 2 - i)).collect()
}

fn bresenham(mut x0: i64, mut y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x0, y0));
        if x0 == x1 && y0 == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Relative positions of the ten locations: centre, random, four half-way
/// to the corners (TL, TR, BL, BR), four half-way to the borders (top,
/// bottom, left, right). Returned as (dx, dy) in units of the half extent.
fn location_fraction(index: usize) -> Option<(f64, f64)> {
    Some(match index {
        0 => (0.0, 0.0),
        2 => (-0.5, -0.5),
        3 => (0.5, -0.5),
        4 => (-0.5, 0.5),
        5 => (0.5, 0.5),
        6 => (0.0, -0.5),
        7 => (0.0, 0.5),
        8 => (-0.5, 0.0),
        9 => (0.5, 0.0),
        _ => return None,
    })
}

/// Fixed per configuration identity, independent of the sampling seed.
fn random_location(config: &PatternConfig) -> (f64, f64) {
    let mut rng = seed::rng(seed::stable_hash(&config.id()));
    (rng.random_range(-0.5..=0.5), rng.random_range(-0.5..=0.5))
}

fn segmentation_target(n: usize, config: &PatternConfig) -> (usize, usize) {
    let (fx, fy) = location_fraction(config.location_index).unwrap_or_else(|| random_location(config));
    let half = (n as f64 - 1.0) / 2.0;
    let cell = |f: f64| ((half + f * half).round() as usize).clamp(1, n - 2);
    (cell(fy), cell(fx))
}

fn crowding_target(canvas: usize, config: &PatternConfig) -> (i64, i64) {
    let (fx, fy) = location_fraction(config.location_index).unwrap_or_else(|| random_location(config));
    let c = (canvas / 2) as f64;
    ((c + fx * c).round() as i64, (c + fy * c).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(img: &ImagePlane) -> usize {
        img.data().iter().filter(|&&v| v == 255.0).count()
    }

    #[test]
    fn ninety_configs_each() {
        for p in Paradigm::ALL {
            assert_eq!(enumerate_configs(p).len(), 90, "{p}");
        }
    }

    #[test]
    fn unknown_paradigm() {
        assert!("texture".parse::<Paradigm>().is_err());
        assert_eq!("Shape".parse::<Paradigm>().unwrap(), Paradigm::Shape);
    }

    #[test]
    fn every_config_renders_at_both_canvases() {
        for canvas in [112, 224] {
            let r = PatternRenderer::new(PatternGeometry::with_canvas(canvas));
            for p in Paradigm::ALL {
                for cfg in enumerate_configs(p) {
                    for cat in 0..p.category_count() {
                        for cond in [Condition::Easy, Condition::Hard] {
                            r.render(&cfg, CategoryLabel::new(cat, cond), 11)
                                .unwrap_or_else(|e| panic!("{} {cat} {cond:?}: {e}", cfg.id()));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn blank_crowding_is_one_glyph() {
        let r = PatternRenderer::default();
        let cfg = &enumerate_configs(Paradigm::Crowding)[0];
        let img = r.render(cfg, CategoryLabel::new(0, Condition::Easy), 3).unwrap();
        let size = cfg.element_size;
        let glyph = r
            .font
            .raster('A', (size * 5.0 / 7.0).round() as usize, size.round() as usize)
            .unwrap();
        assert_eq!(white(&img), glyph.len());
    }

    #[test]
    fn bad_label_rejected() {
        let cfg = &enumerate_configs(Paradigm::Segmentation)[0];
        assert!(render_pattern(cfg, CategoryLabel::new(2, Condition::Easy), 0, 224).is_err());
    }

    #[test]
    fn oversize_geometry_is_an_error() {
        let mut cfg = enumerate_configs(Paradigm::Shape)[0].clone();
        cfg.element_size = 200.0;
        let e = render_pattern(&cfg, CategoryLabel::new(0, Condition::Easy), 0, 224).unwrap_err();
        assert!(matches!(e, Error::Geometry(_)));
    }

    #[test]
    fn bresenham_endpoints() {
        let l = bresenham(0, 0, 5, -3);
        assert_eq!(l.first(), Some(&(0, 0)));
        assert_eq!(l.last(), Some(&(5, -3)));
        assert_eq!(l.len(), 6);
    }
}
