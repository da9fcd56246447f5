//! Visualizations of intermediate rasters as PNG images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frequency::{RidgeFrequencyMap, MAX_FREQUENCY, MIN_FREQUENCY};
use crate::image::GrayImage;
use crate::io::{encode_png, quantize};
use crate::orientation::OrientationField;
use crate::region::CurvatureMap;

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    /// Gray image copied into all three channels.
    pub fn from_gray(img: &GrayImage) -> Self {
        let data = img
            .pixels()
            .iter()
            .flat_map(|&v| {
                let g = quantize(v);
                [g, g, g]
            })
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(self.width, self.height, png::ColorType::Rgb, &self.data)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png()?).map_err(|e| Error::from(e).in_file(path))
    }

    fn draw_segment(&mut self, from: [f64; 2], to: [f64; 2], rgb: [u8; 3]) {
        let steps = (to[0] - from[0]).abs().max((to[1] - from[1]).abs()).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let x = (from[0] + t * (to[0] - from[0])).round();
            let y = (from[1] + t * (to[1] - from[1])).round();
            if x >= 0.0 && y >= 0.0 && (x as usize) < self.width && (y as usize) < self.height {
                self.put(x as usize, y as usize, rgb);
            }
        }
    }
}

/// Orientation needles drawn every `spacing` pixels over the image.
pub fn render_orientation(img: &GrayImage, of: &OrientationField, spacing: usize) -> RgbImage {
    let mut out = RgbImage::from_gray(img);
    let spacing = spacing.max(2);
    let half = 0.4 * spacing as f64;
    for y in (spacing / 2..of.height()).step_by(spacing) {
        for x in (spacing / 2..of.width()).step_by(spacing) {
            if let Some(t) = of.get(x, y) {
                let (dx, dy) = (half * t.cos(), half * t.sin());
                let (cx, cy) = (x as f64, y as f64);
                out.draw_segment([cx - dx, cy - dy], [cx + dx, cy + dy], [220, 30, 30]);
            }
        }
    }
    out
}

/// Blue (low) to red (high) ramp through green.
fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (2.0 * t - 1.0).max(0.0);
    let b = (1.0 - 2.0 * t).max(0.0);
    let g = 1.0 - r - b;
    [quantize(255.0 * r), quantize(255.0 * g), quantize(255.0 * b)]
}

/// False color of the frequency over `[1/25, 1/3]`; absent values are black.
pub fn render_frequency(rf: &RidgeFrequencyMap) -> RgbImage {
    let mut out = RgbImage::new(rf.width(), rf.height());
    for y in 0..rf.height() {
        for x in 0..rf.width() {
            if let Some(f) = rf.get(x, y) {
                out.put(x, y, ramp((f - MIN_FREQUENCY) / (MAX_FREQUENCY - MIN_FREQUENCY)));
            }
        }
    }
    out
}

/// Curvature as gray, 0 black and pi white; absent values are dark red.
pub fn render_curvature(c: &CurvatureMap) -> RgbImage {
    let mut out = RgbImage::new(c.width(), c.height());
    for y in 0..c.height() {
        for x in 0..c.width() {
            let rgb = match c.get(x, y) {
                Some(v) => {
                    let g = quantize(255.0 * v / std::f64::consts::PI);
                    [g, g, g]
                }
                None => [96, 0, 0],
            };
            out.put(x, y, rgb);
        }
    }
    out
}

/// Image with pixels whose curvature exceeds `threshold` tinted red.
pub fn render_curvature_overlay(img: &GrayImage, c: &CurvatureMap, threshold: f64) -> RgbImage {
    let mut out = RgbImage::from_gray(img);
    for y in 0..c.height().min(img.height()) {
        for x in 0..c.width().min(img.width()) {
            if c.get(x, y).is_some_and(|v| v > threshold) {
                let [g, _, _] = out.get(x, y);
                out.put(x, y, [g.saturating_add(120), g / 2, g / 2]);
            }
        }
    }
    out
}
