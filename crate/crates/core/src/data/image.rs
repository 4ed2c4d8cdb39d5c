//! RGB images in `[0, 1]` with 8-bit PNG I/O.

use std::path::Path;

use image::{GrayImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::render::PixelRect;

/// Row-major RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vec3<f64>>,
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Vec3<f64>) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(c, r));
            }
        }
        Image { width, height, data }
    }

    pub fn get(&self, col: usize, row: usize) -> Vec3<f64> {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: Vec3<f64>) {
        self.data[row * self.width + col] = v;
    }

    pub fn crop(&self, rect: &PixelRect) -> Vec<Vec3<f64>> {
        rect.pixels().map(|(c, r)| self.get(c, r)).collect()
    }

    /// Round-trip through 8 bits, as writing and reading a PNG would.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|p| p.map(|v| to_u8(v) as f64 / 255.0))
                .collect(),
        }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::io(path, e))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
            .collect();
        Ok(Image {
            width: w as usize,
            height: h as usize,
            data,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.data.iter().flat_map(|p| p.map(to_u8)).collect();
        let img = RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::Invariant("image buffer size mismatch".into()))?;
        img.save_with_format(path, ImageFormat::Png).map_err(|e| Error::io(path, e))
    }
}

/// Save a single-channel `[0, 1]` map as an 8-bit grayscale PNG.
pub fn save_gray_png(values: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    let raw: Vec<u8> = values.iter().map(|&v| to_u8(v)).collect();
    let img = GrayImage::from_raw(width as u32, height as u32, raw)
        .ok_or_else(|| Error::Invariant("image buffer size mismatch".into()))?;
    img.save_with_format(path, ImageFormat::Png).map_err(|e| Error::io(path, e))
}
