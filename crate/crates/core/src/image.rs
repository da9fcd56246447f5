//! Real-valued grayscale raster with a foreground mask.
//!
//! Pixels are stored as `f64` gray levels (nominally `[0, 255]`) for the whole
//! pipeline; quantization to 8 bits happens only when an image is written out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{floor_i64, MAX_COORDINATE};

/// Sampling kernel used when reading a raster at decimal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationMethod {
    NearestNeighbor,
    #[default]
    Bilinear,
    /// Catmull-Rom cubic convolution (a = -0.5) over a 4x4 neighborhood.
    Bicubic,
}

impl std::str::FromStr for InterpolationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" | "nearest-neighbor" | "nn" => Ok(Self::NearestNeighbor),
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(Error::param(format!("unknown interpolation method `{other}`"))),
        }
    }
}

/// Interpolation used for gray values and for orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Interpolation {
    pub gray: InterpolationMethod,
    /// Nearest neighbor or bilinear; bicubic is treated as bilinear.
    pub orientation: InterpolationMethod,
}

impl Default for Interpolation {
    fn default() -> Self {
        Self {
            gray: InterpolationMethod::Bilinear,
            orientation: InterpolationMethod::Bilinear,
        }
    }
}

/// Target statistics of the input and output normalizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Normalization {
    pub target_mean: f64,
    pub target_std: f64,
    /// Disk radius of the local normalization applied after filtering.
    pub local_radius: usize,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            target_mean: 127.5,
            target_std: 100.0,
            local_radius: 16,
        }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_std > 0.0 && self.target_mean.is_finite()) {
            return Err(Error::param("normalization needs a finite mean and a positive deviation"));
        }
        if self.local_radius == 0 {
            return Err(Error::param("local normalization radius must be at least 1"));
        }
        Ok(())
    }

    pub fn global(&self, img: &GrayImage) -> GrayImage {
        normalize_global(img, self.target_mean, self.target_std * self.target_std)
    }

    pub fn local(&self, img: &GrayImage) -> GrayImage {
        normalize_local(img, self.target_mean, self.target_std, self.local_radius)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    mask: Vec<bool>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        let n = width * height;
        for len in [pixels.len(), mask.len()] {
            if len != n {
                return Err(Error::BufferSize { expected: n, found: len });
            }
        }
        Ok(Self { width, height, pixels, mask })
    }

    /// Image whose every pixel is foreground.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let n = pixels.len();
        Self::new(width, height, pixels, vec![true; n])
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_pixels(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Replaces the mask, keeping pixel values.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.pixels.len() {
            return Err(Error::BufferSize {
                expected: self.pixels.len(),
                found: mask.len(),
            });
        }
        self.mask = mask;
        Ok(self)
    }

    fn sample(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let idx = y as usize * self.width + x as usize;
        self.mask[idx].then(|| self.pixels[idx])
    }

    /// Gray value at decimal coordinates.
    ///
    /// Absent when a pixel carrying nonzero weight is out of bounds or masked
    /// out. Zero-weight taps are never consulted, so every method is exact at
    /// integer coordinates, including the last row and column.
    pub fn interpolate(&self, x: f64, y: f64, method: InterpolationMethod) -> Option<f64> {
        if !(x.abs() < MAX_COORDINATE && y.abs() < MAX_COORDINATE) {
            return None;
        }
        match method {
            InterpolationMethod::NearestNeighbor => self.sample(x.round() as i64, y.round() as i64),
            InterpolationMethod::Bilinear => {
                let (x0, y0) = (floor_i64(x), floor_i64(y));
                let (tx, ty) = (x - x0 as f64, y - y0 as f64);
                if x0 >= 0 && y0 >= 0 && x0 + 1 < self.width as i64 && y0 + 1 < self.height as i64 {
                    let i = y0 as usize * self.width + x0 as usize;
                    let j = i + self.width;
                    let (m0, m1) = (&self.mask[i..i + 2], &self.mask[j..j + 2]);
                    if m0[0] && m0[1] && m1[0] && m1[1] {
                        let (p0, p1) = (&self.pixels[i..i + 2], &self.pixels[j..j + 2]);
                        let top = p0[0] + tx * (p0[1] - p0[0]);
                        let bottom = p1[0] + tx * (p1[1] - p1[0]);
                        return Some(top + ty * (bottom - top));
                    }
                }
                let wx = [(x0, 1.0 - tx), (x0 + 1, tx)];
                let wy = [(y0, 1.0 - ty), (y0 + 1, ty)];
                self.separable(&wx, &wy)
            }
            InterpolationMethod::Bicubic => {
                let (x0, y0) = (floor_i64(x), floor_i64(y));
                let wx = cubic_taps(x0, x - x0 as f64);
                let wy = cubic_taps(y0, y - y0 as f64);
                self.separable(&wx, &wy)
            }
        }
    }

    fn separable(&self, wx: &[(i64, f64)], wy: &[(i64, f64)]) -> Option<f64> {
        let mut acc = 0.0;
        for &(yy, vy) in wy.iter().filter(|(_, w)| *w != 0.0) {
            for &(xx, vx) in wx.iter().filter(|(_, w)| *w != 0.0) {
                acc += vx * vy * self.sample(xx, yy)?;
            }
        }
        Some(acc)
    }

    /// Mean and population variance over foreground pixels.
    pub fn foreground_stats(&self) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .pixels
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var))
    }
}

/// Free-function form of [`GrayImage::interpolate`].
pub fn interpolate_gray(img: &GrayImage, x: f64, y: f64, method: InterpolationMethod) -> Option<f64> {
    img.interpolate(x, y, method)
}

fn catmull_rom(d: f64) -> f64 {
    const A: f64 = -0.5;
    let d = d.abs();
    if d <= 1.0 {
        (A + 2.0) * d * d * d - (A + 3.0) * d * d + 1.0
    } else if d < 2.0 {
        A * d * d * d - 5.0 * A * d * d + 8.0 * A * d - 4.0 * A
    } else {
        0.0
    }
}

fn cubic_taps(base: i64, t: f64) -> [(i64, f64); 4] {
    [
        (base - 1, catmull_rom(1.0 + t)),
        (base, catmull_rom(t)),
        (base + 1, catmull_rom(1.0 - t)),
        (base + 2, catmull_rom(2.0 - t)),
    ]
}

#[inline]
fn mean_variance_map(value: f64, mean: f64, var: f64, target_mean: f64, target_var: f64) -> f64 {
    let dev = (target_var * (value - mean).powi(2) / var).sqrt();
    if value > mean {
        target_mean + dev
    } else {
        target_mean - dev
    }
}

/// Global mean/variance normalization of the foreground.
///
/// Pixels above the mean are shifted up and pixels below shifted down by
/// `sqrt(target_variance * (I - mean)^2 / variance)`. A zero-variance
/// foreground becomes constant `target_mean`. Background pixels are untouched.
pub fn normalize_global(img: &GrayImage, target_mean: f64, target_variance: f64) -> GrayImage {
    let mut out = img.clone();
    let Some((mean, var)) = img.foreground_stats() else {
        return out;
    };
    for (v, &m) in out.pixels.iter_mut().zip(&img.mask) {
        if !m {
            continue;
        }
        *v = if var <= 0.0 {
            target_mean
        } else {
            mean_variance_map(*v, mean, var, target_mean, target_variance)
        };
    }
    out
}

/// Variance below which a neighborhood is treated as flat.
const FLAT_VARIANCE: f64 = 1e-9;

/// Locally adaptive normalization over a Euclidean disk.
///
/// Each foreground pixel is remapped with the global formula using the mean
/// and standard deviation of the foreground pixels within `radius` of it.
/// Background pixels pass through unchanged.
pub fn normalize_local(img: &GrayImage, target_mean: f64, target_std: f64, radius: usize) -> GrayImage {
    let (w, h) = img.dims();
    // Offset by the global mean to keep the sum-of-squares well conditioned.
    let offset = img.foreground_stats().map_or(0.0, |(m, _)| m);
    let stride = w + 1;
    let mut count = vec![0u32; stride * h];
    let mut sum = vec![0.0f64; stride * h];
    let mut sum_sq = vec![0.0f64; stride * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (c, s, q) = if img.mask[i] {
                let v = img.pixels[i] - offset;
                (1, v, v * v)
            } else {
                (0, 0.0, 0.0)
            };
            let j = y * stride + x;
            count[j + 1] = count[j] + c;
            sum[j + 1] = sum[j] + s;
            sum_sq[j + 1] = sum_sq[j] + q;
        }
    }
    let r = radius as i64;
    let half_widths: Vec<i64> = (-r..=r)
        .map(|dy| (((r * r - dy * dy) as f64).sqrt()).floor() as i64)
        .collect();
    let target_var = target_std * target_std;

    let pixels: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let value = img.pixels[i];
            if !img.mask[i] {
                return value;
            }
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let (mut n, mut s, mut q) = (0u32, 0.0, 0.0);
            for (k, &hw) in half_widths.iter().enumerate() {
                let yy = y + k as i64 - r;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                let lo = (x - hw).max(0) as usize;
                let hi = ((x + hw).min(w as i64 - 1) + 1) as usize;
                let row = yy as usize * stride;
                n += count[row + hi] - count[row + lo];
                s += sum[row + hi] - sum[row + lo];
                q += sum_sq[row + hi] - sum_sq[row + lo];
            }
            let n = f64::from(n);
            let mean = s / n;
            let var = (q / n - mean * mean).max(0.0);
            if var < FLAT_VARIANCE {
                target_mean
            } else {
                mean_variance_map(value - offset, mean, var, target_mean, target_var)
            }
        })
        .collect();
    GrayImage {
        pixels,
        ..img.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (x * 7 + y * 13 % 11) as f64).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            GrayImage::from_pixels(0, 3, vec![]),
            Err(Error::EmptyImage { .. })
        ));
        assert!(matches!(
            GrayImage::new(2, 2, vec![0.0; 4], vec![true; 3]),
            Err(Error::BufferSize { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn exact_at_grid_points_for_every_method() {
        let img = ramp(9, 9);
        for method in [
            InterpolationMethod::NearestNeighbor,
            InterpolationMethod::Bilinear,
            InterpolationMethod::Bicubic,
        ] {
            for (x, y) in [(5, 7), (0, 0), (8, 8), (8, 0)] {
                assert_eq!(
                    img.interpolate(x as f64, y as f64, method),
                    Some(img.get(x, y)),
                    "{method:?} at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn bilinear_midpoint() {
        let img = GrayImage::from_pixels(2, 1, vec![10.0, 20.0]).unwrap();
        assert_eq!(img.interpolate(0.5, 0.0, InterpolationMethod::Bilinear), Some(15.0));
    }

    #[test]
    fn bicubic_reproduces_constant_patch() {
        // Brute-force check that the 16 weights sum to one before relying on it.
        for &t in &[0.0, 0.1, 0.25, 0.5, 0.77, 0.999] {
            let wsum: f64 = cubic_taps(0, t).iter().map(|(_, w)| w).sum();
            assert_abs_diff_eq!(wsum, 1.0, epsilon = 1e-12);
        }
        let img = GrayImage::filled(4, 4, 42.0).unwrap();
        let v = img.interpolate(1.5, 1.5, InterpolationMethod::Bicubic).unwrap();
        assert_abs_diff_eq!(v, 42.0, epsilon = 1e-12);
    }

    #[test]
    fn absent_outside_or_on_masked_pixels() {
        let mut mask = vec![true; 16];
        mask[5] = false; // (1,1)
        let img = GrayImage::new(4, 4, vec![1.0; 16], mask).unwrap();
        assert_eq!(img.interpolate(-0.5, 0.0, InterpolationMethod::Bilinear), None);
        assert_eq!(img.interpolate(3.5, 0.0, InterpolationMethod::Bilinear), None);
        assert_eq!(img.interpolate(0.5, 0.5, InterpolationMethod::Bilinear), None);
        assert_eq!(img.interpolate(1.2, 1.2, InterpolationMethod::NearestNeighbor), None);
        // Bicubic at (2.5, 2.5) reaches (1,1).
        assert_eq!(img.interpolate(2.5, 2.5, InterpolationMethod::Bicubic), None);
        assert_eq!(img.interpolate(2.0, 2.0, InterpolationMethod::Bicubic), Some(1.0));
        assert_eq!(img.interpolate(f64::NAN, 1.0, InterpolationMethod::Bilinear), None);
    }

    #[test]
    fn global_normalization_two_pixels() {
        let img = GrayImage::from_pixels(2, 1, vec![0.0, 200.0]).unwrap();
        let out = normalize_global(&img, 127.5, 100.0);
        assert_abs_diff_eq!(out.pixels()[0], 117.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.pixels()[1], 137.5, epsilon = 1e-12);
    }

    #[test]
    fn global_normalization_constant_and_fixed_point() {
        let img = GrayImage::filled(3, 3, 12.0).unwrap();
        let out = normalize_global(&img, 127.5, 100.0);
        assert!(out.pixels().iter().all(|&v| v == 127.5));

        let once = normalize_global(&ramp(16, 16), 127.5, 10_000.0);
        let twice = normalize_global(&once, 127.5, 10_000.0);
        for (a, b) in once.pixels().iter().zip(twice.pixels()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let (m, v) = once.foreground_stats().unwrap();
        assert_abs_diff_eq!(m, 127.5, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 10_000.0, epsilon = 1e-6);
    }

    #[test]
    fn global_normalization_leaves_background() {
        let img = GrayImage::new(3, 1, vec![0.0, 10.0, 99.0], vec![true, true, false]).unwrap();
        let out = normalize_global(&img, 50.0, 4.0);
        assert_eq!(out.pixels(), &[48.0, 52.0, 99.0]);
    }

    #[test]
    fn local_normalization_constant_patch() {
        let mut mask = vec![false; 100];
        for y in 3..7 {
            for x in 3..7 {
                mask[y * 10 + x] = true;
            }
        }
        let img = GrayImage::new(10, 10, vec![40.0; 100], mask.clone()).unwrap();
        let out = normalize_local(&img, 127.5, 100.0, 16);
        for (i, &m) in mask.iter().enumerate() {
            assert_eq!(out.pixels()[i], if m { 127.5 } else { 40.0 });
        }
    }

    /// Brute-force disk statistics, independent of the prefix-sum path.
    fn disk_stats(img: &GrayImage, x: usize, y: usize, r: usize) -> (f64, f64) {
        let mut vals = Vec::new();
        for yy in 0..img.height() {
            for xx in 0..img.width() {
                let (dx, dy) = (xx as f64 - x as f64, yy as f64 - y as f64);
                if dx * dx + dy * dy <= (r * r) as f64 && img.is_foreground(xx, yy) {
                    vals.push(img.get(xx, yy));
                }
            }
        }
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let v = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn local_normalization_checkerboard() {
        let img = GrayImage::from_fn(64, 64, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 255.0 }).unwrap();
        let out = normalize_local(&img, 127.5, 100.0, 16);
        let (m, s) = disk_stats(&img, 32, 32, 16);
        // The radius-16 disk holds 405 even-parity pixels and 392 odd ones.
        assert_abs_diff_eq!(m, 255.0 * 392.0 / 797.0, epsilon = 1e-9);
        let expected = 127.5 - 100.0 * (0.0 - m).abs() / s;
        assert_abs_diff_eq!(out.get(32, 32), expected, epsilon = 1e-9);
        assert!((out.get(32, 32) - 29.118).abs() < 1e-3);
        for &(x, y) in &[(0, 0), (5, 40), (63, 63)] {
            let (m, s) = disk_stats(&img, x, y, 16);
            let v = img.get(x, y);
            let e = if v > m { 127.5 + 100.0 * (v - m) / s } else { 127.5 - 100.0 * (m - v) / s };
            assert_abs_diff_eq!(out.get(x, y), e, epsilon = 1e-9);
        }
    }

    #[test]
    fn local_normalization_with_huge_radius_matches_global() {
        let img = ramp(20, 15);
        let local = normalize_local(&img, 127.5, 100.0, 100);
        let global = normalize_global(&img, 127.5, 100.0 * 100.0);
        for (a, b) in local.pixels().iter().zip(global.pixels()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn interpolation_reproduces_constants(
            c in -500.0f64..500.0,
            x in 0.0f64..7.0,
            y in 0.0f64..7.0,
        ) {
            let img = GrayImage::filled(8, 8, c).unwrap();
            for method in [InterpolationMethod::NearestNeighbor, InterpolationMethod::Bilinear] {
                let v = img.interpolate(x, y, method).unwrap();
                proptest::prop_assert!((v - c).abs() < 1e-9);
            }
            if (1.0..6.0).contains(&x) && (1.0..6.0).contains(&y) {
                let v = img.interpolate(x, y, InterpolationMethod::Bicubic).unwrap();
                proptest::prop_assert!((v - c).abs() < 1e-9);
            }
        }

        #[test]
        fn global_normalization_is_idempotent(values in proptest::collection::vec(0.0f64..255.0, 4..40)) {
            let n = values.len();
            let img = GrayImage::from_pixels(n, 1, values).unwrap();
            let once = normalize_global(&img, 127.5, 10_000.0);
            let twice = normalize_global(&once, 127.5, 10_000.0);
            for (a, b) in once.pixels().iter().zip(twice.pixels()) {
                proptest::prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
