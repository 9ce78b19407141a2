use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 7;

/// Bitmap font of 5x7 glyphs, scaled by nearest neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Font {
    /// Seven rows of five characters each; `#` marks a lit pixel.
    pub glyphs: BTreeMap<char, Vec<String>>,
}

const BUILTIN: &[(char, [&str; 7])] = &[
    ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('B', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('C', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('D', ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('N', ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"]),
    ('S', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
];

impl Default for Font {
    fn default() -> Self {
        let glyphs = BUILTIN
            .iter()
            .map(|(c, rows)| (*c, rows.iter().map(|r| r.to_string()).collect()))
            .collect();
        Self { glyphs }
    }
}

impl Font {
    pub fn validate(&self) -> Result<()> {
        for (c, rows) in &self.glyphs {
            if rows.len() != GLYPH_ROWS || rows.iter().any(|r| r.chars().count() != GLYPH_COLS) {
                return Err(Error::Config(format!("glyph '{c}' must be 7 rows of 5 characters")));
            }
        }
        Ok(())
    }

    /// Lit pixel offsets of `ch` rendered into a `width`x`height` box,
    /// relative to the box's top-left corner.
    pub fn raster(&self, ch: char, width: usize, height: usize) -> Result<Vec<(i64, i64)>> {
        let rows = self
            .glyphs
            .get(&ch)
            .ok_or_else(|| Error::Config(format!("font has no glyph for '{ch}'")))?;
        let bits: Vec<Vec<bool>> = rows.iter().map(|r| r.chars().map(|c| c == '#').collect()).collect();
        let mut px = Vec::new();
        for y in 0..height {
            let sy = y * GLYPH_ROWS / height;
            for x in 0..width {
                let sx = x * GLYPH_COLS / width;
                if bits[sy][sx] {
                    px.push((x as i64, y as i64));
                }
            }
        }
        Ok(px)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn native_size_matches_bitmap() {
        let f = Font::default();
        f.validate().unwrap();
        let t = f.raster('T', 5, 7).unwrap();
        assert_eq!(t.len(), 5 + 6);
    }

    #[test]
    fn upscaling_multiplies_counts() {
        let f = Font::default();
        let a1 = f.raster('A', 5, 7).unwrap().len();
        let a3 = f.raster('A', 15, 21).unwrap().len();
        assert_eq!(a3, 9 * a1);
    }
}
