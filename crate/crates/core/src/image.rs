//! Planar raster with nominal pixel range [0, 255].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle, `x`/`y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    /// Centered square whose side is half the shorter image side.
    pub fn centered_half(width: usize, height: usize) -> Self {
        let side = (width.min(height) / 2).max(1);
        Self {
            x: (width - side) / 2,
            y: (height - side) / 2,
            width: side,
            height: side,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x + self.width <= width && self.y + self.height <= height
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Single-channel or RGB raster. Pixels are stored planar (channel-major,
/// then row-major), which is also the tensor layout the engine consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixel values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("image contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Mean over every channel inside `region`.
    pub fn region_mean(&self, region: &Rect) -> f64 {
        let mut sum = 0.0;
        for c in 0..self.channels {
            for y in region.y..region.y + region.height {
                let row = self.index(c, y, region.x);
                sum += self.data[row..row + region.width].iter().sum::<f64>();
            }
        }
        sum / (region.area() * self.channels) as f64
    }

    /// Population standard deviation over every channel inside `region`.
    pub fn region_std(&self, region: &Rect) -> f64 {
        let mean = self.region_mean(region);
        let mut ss = 0.0;
        for c in 0..self.channels {
            for y in region.y..region.y + region.height {
                for x in region.x..region.x + region.width {
                    let d = self.get(c, y, x) - mean;
                    ss += d * d;
                }
            }
        }
        (ss / (region.area() * self.channels) as f64).sqrt()
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = v.clamp(lo, hi);
        }
    }

    /// Converts to `channels` channels: grayscale is replicated to RGB, RGB
    /// collapses to the channel mean.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (1, 3) => {
                let mut data = Vec::with_capacity(self.data.len() * 3);
                for _ in 0..3 {
                    data.extend_from_slice(&self.data);
                }
                Ok(Self {
                    channels: 3,
                    data,
                    ..*self
                })
            }
            (3, 1) => {
                let n = self.width * self.height;
                let data = (0..n)
                    .map(|i| (self.data[i] + self.data[n + i] + self.data[2 * n + i]) / 3.0)
                    .collect();
                Ok(Self {
                    channels: 1,
                    data,
                    ..*self
                })
            }
            (_, b) => Err(Error::InvalidArgument(format!("cannot convert to {b} channels"))),
        }
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let mut out = Self::zeros(width, height, self.channels);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for c in 0..self.channels {
            for y in 0..height {
                let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
                let y0 = fy.floor() as usize;
                let y1 = (y0 + 1).min(self.height - 1);
                let wy = fy - y0 as f64;
                for x in 0..width {
                    let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                    let x0 = fx.floor() as usize;
                    let x1 = (x0 + 1).min(self.width - 1);
                    let wx = fx - x0 as f64;
                    let top = self.get(c, y0, x0) * (1.0 - wx) + self.get(c, y0, x1) * wx;
                    let bot = self.get(c, y1, x0) * (1.0 - wx) + self.get(c, y1, x1) * wx;
                    out.set(c, y, x, top * (1.0 - wy) + bot * wy);
                }
            }
        }
        out
    }

    /// Copies `self` into a `width`x`height` canvas filled with `fill`, with
    /// the top-left corner at (`x`, `y`).
    pub fn paste_into(&self, width: usize, height: usize, x: usize, y: usize, fill: f64) -> Result<Self> {
        if x + self.width > width || y + self.height > height {
            return Err(Error::Geometry(format!(
                "{}x{} image at ({x},{y}) does not fit a {width}x{height} canvas",
                self.width, self.height
            )));
        }
        let mut out = Self::filled(width, height, self.channels, fill);
        for c in 0..self.channels {
            for row in 0..self.height {
                let src = self.index(c, row, 0);
                let dst = out.index(c, y + row, x);
                out.data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
            }
        }
        Ok(out)
    }

    /// Loads an 8-bit image (PNG or PGM/PPM) as `channels` channels.
    pub fn load(path: impl AsRef<Path>, channels: usize) -> Result<Self> {
        let img = image::open(path.as_ref())?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match channels {
            1 => {
                let luma = img.to_luma8();
                let data = luma.into_raw().into_iter().map(f64::from).collect();
                Self::from_data(w, h, 1, data)
            }
            3 => {
                let rgb = img.to_rgb8().into_raw();
                let n = w * h;
                let mut data = vec![0.0; 3 * n];
                for i in 0..n {
                    for c in 0..3 {
                        data[c * n + i] = f64::from(rgb[3 * i + c]);
                    }
                }
                Self::from_data(w, h, 3, data)
            }
            _ => Err(Error::InvalidArgument(format!(
                "channel count must be 1 or 3, got {channels}"
            ))),
        }
    }

    /// Writes an 8-bit rendering; the container follows the file extension
    /// (`.png`, `.pgm`, `.ppm`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let to_u8 = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        let n = self.width * self.height;
        if self.channels == 1 {
            let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
            image::GrayImage::from_raw(w, h, buf)
                .expect("buffer size matches")
                .save(path.as_ref())?;
        } else {
            let mut buf = Vec::with_capacity(3 * n);
            for i in 0..n {
                for c in 0..3 {
                    buf.push(to_u8(self.data[c * n + i]));
                }
            }
            image::RgbImage::from_raw(w, h, buf)
                .expect("buffer size matches")
                .save(path.as_ref())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_and_collapse_channels() {
        let mut g = ImagePlane::zeros(3, 2, 1);
        g.set(0, 1, 2, 9.0);
        let rgb = g.with_channels(3).unwrap();
        assert_eq!(rgb.get(2, 1, 2), 9.0);
        assert_eq!(rgb.with_channels(1).unwrap(), g);
    }

    #[test]
    fn region_statistics() {
        let mut img = ImagePlane::filled(4, 4, 1, 10.0);
        img.set(0, 1, 1, 20.0);
        let r = Rect::new(1, 1, 2, 1);
        assert_eq!(img.region_mean(&r), 15.0);
        assert_eq!(img.region_std(&r), 5.0);
    }

    #[test]
    fn bilinear_preserves_constants() {
        let img = ImagePlane::filled(149, 149, 1, 42.0);
        let big = img.resize_bilinear(224, 224);
        assert!(big.data().iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn centered_half_region() {
        let r = Rect::centered_half(224, 224);
        assert_eq!(r, Rect::new(56, 56, 112, 112));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ImagePlane::zeros(5, 4, 1);
        img.set(0, 2, 3, 255.0);
        let p = dir.path().join("x.png");
        img.save(&p).unwrap();
        assert_eq!(ImagePlane::load(&p, 1).unwrap(), img);
    }
}
