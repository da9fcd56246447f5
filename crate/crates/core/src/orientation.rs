//! Orientation field estimation, fusion of two estimators, gap reconstruction
//! and extrapolation, and sub-pixel orientation lookup.
//!
//! Orientations are undirected angles in `[0, pi)`. Every average is taken in
//! the doubled-angle representation `(cos 2t, sin 2t)`, which makes `t` and
//! `t + pi` the same vector.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fill_from_neighbors, floor_i64, IntegralImage, MAX_COORDINATE};
use crate::image::{GrayImage, InterpolationMethod};

/// Resultant length below which a doubled-angle average is undefined.
const MIN_RESULTANT: f64 = 1e-9;

/// Fraction of `window area x max squared gradient` below which the
/// accumulated doubled-angle vector is considered noise.
const COHERENCE_FLOOR: f64 = 1e-3;

/// Wraps any angle into `[0, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly pi
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Undirected difference between two orientations, in `[0, pi/2]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

/// Doubled-angle mean of a set of orientations, or `None` if the doubled
/// vectors cancel.
pub fn circular_mean(angles: &[f64]) -> Option<f64> {
    let (c, s) = angles
        .iter()
        .fold((0.0, 0.0), |(c, s), &t| (c + (2.0 * t).cos(), s + (2.0 * t).sin()));
    let n = angles.len() as f64;
    if angles.is_empty() || (c * c + s * s).sqrt() / n < MIN_RESULTANT {
        return None;
    }
    Some(wrap_angle(0.5 * s.atan2(c)))
}

/// Unit doubled-angle vector with the matching unit direction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Axis {
    /// `(cos 2t, sin 2t)`
    pub doubled: [f64; 2],
    /// `(cos t, sin t)` with `t` in `[0, pi)`
    pub dir: [f64; 2],
}

impl Axis {
    pub fn from_angle(theta: f64) -> Self {
        let t = wrap_angle(theta);
        Self {
            doubled: [(2.0 * t).cos(), (2.0 * t).sin()],
            dir: [t.cos(), t.sin()],
        }
    }

    /// Builds the axis from a doubled-angle vector of any positive length.
    fn from_doubled(c: f64, s: f64) -> Option<Self> {
        let len = (c * c + s * s).sqrt();
        if !(len >= MIN_RESULTANT) {
            return None;
        }
        // (len + c, s) points along the half angle; flip it so that t lies in
        // [0, pi), that is sin t >= 0.
        let u = c + len;
        let n = (u * u + s * s).sqrt();
        let dir = if n == 0.0 {
            [0.0, 1.0]
        } else if s < 0.0 {
            [-u / n, -s / n]
        } else {
            [u / n, s / n]
        };
        Some(Self {
            doubled: [c / len, s / len],
            dir,
        })
    }

    pub fn angle(&self) -> f64 {
        wrap_angle(0.5 * self.doubled[1].atan2(self.doubled[0]))
    }

    /// Undirected angle between two axes.
    pub fn difference(&self, other: &Axis) -> f64 {
        let dot = self.doubled[0] * other.doubled[0] + self.doubled[1] * other.doubled[1];
        0.5 * dot.clamp(-1.0, 1.0).acos()
    }
}

/// Per-pixel undirected orientation with validity.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    width: usize,
    height: usize,
    angles: Vec<Option<f64>>,
    /// Doubled-angle unit vectors followed by a validity weight (1 or 0);
    /// all zero where invalid.
    doubled: Vec<[f64; 3]>,
}

impl OrientationField {
    /// Angles are wrapped into `[0, pi)`.
    pub fn new(width: usize, height: usize, angles: Vec<Option<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        if angles.len() != width * height {
            return Err(Error::BufferSize {
                expected: width * height,
                found: angles.len(),
            });
        }
        let angles: Vec<Option<f64>> = angles
            .into_iter()
            .map(|a| a.filter(|t| t.is_finite()).map(wrap_angle))
            .collect();
        let doubled = angles
            .iter()
            .map(|a| {
                a.map_or([0.0; 3], |t| {
                    let [c, s] = Axis::from_angle(t).doubled;
                    [c, s, 1.0]
                })
            })
            .collect();
        Ok(Self {
            width,
            height,
            angles,
            doubled,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Option<f64>) -> Result<Self> {
        let angles = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self::new(width, height, angles)
    }

    pub fn uniform(width: usize, height: usize, theta: f64) -> Result<Self> {
        Self::new(width, height, vec![Some(theta); width * height])
    }

    pub fn invalid(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![None; width * height])
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

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.angles[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.angles[y * self.width + x].is_some()
    }

    pub fn angles(&self) -> &[Option<f64>] {
        &self.angles
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.angles.iter().map(Option::is_some).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.angles.iter().filter(|a| a.is_some()).count()
    }

    fn grid_doubled(&self, x: i64, y: i64) -> Option<[f64; 2]> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let i = y as usize * self.width + x as usize;
        let [c, s, v] = self.doubled[i];
        (v > 0.0).then_some([c, s])
    }

    /// Interpolated orientation as an [`Axis`]; the hot path of region walks.
    pub(crate) fn axis_at(&self, x: f64, y: f64, method: InterpolationMethod) -> Option<Axis> {
        if !(x.abs() < MAX_COORDINATE && y.abs() < MAX_COORDINATE) {
            return None;
        }
        let (x0, y0) = (floor_i64(x), floor_i64(y));
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        match method {
            InterpolationMethod::NearestNeighbor => {
                let mut corners = [
                    (x0, y0, tx * tx + ty * ty),
                    (x0 + 1, y0, (1.0 - tx).powi(2) + ty * ty),
                    (x0, y0 + 1, tx * tx + (1.0 - ty).powi(2)),
                    (x0 + 1, y0 + 1, (1.0 - tx).powi(2) + (1.0 - ty).powi(2)),
                ];
                corners.sort_by(|a, b| a.2.total_cmp(&b.2));
                corners
                    .iter()
                    .find_map(|&(cx, cy, _)| self.grid_doubled(cx, cy))
                    .and_then(|[c, s]| Axis::from_doubled(c, s))
            }
            // Bicubic is not offered for angles; treat it as bilinear.
            InterpolationMethod::Bilinear | InterpolationMethod::Bicubic => {
                if x0 >= 0 && y0 >= 0 && x0 + 1 < self.width as i64 && y0 + 1 < self.height as i64 {
                    // Interior: invalid corners carry zero weight through the
                    // validity entry.
                    let i = y0 as usize * self.width + x0 as usize;
                    let (a, b) = (&self.doubled[i..i + 2], &self.doubled[i + self.width..i + self.width + 2]);
                    let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
                    let mut acc = [0.0; 3];
                    for (wk, d) in w.iter().zip([a[0], a[1], b[0], b[1]]) {
                        acc[0] += wk * d[0];
                        acc[1] += wk * d[1];
                        acc[2] += wk * d[2];
                    }
                    if acc[2] == 0.0 {
                        return None;
                    }
                    return Axis::from_doubled(acc[0] / acc[2], acc[1] / acc[2]);
                }
                let taps = [
                    (x0, y0, (1.0 - tx) * (1.0 - ty)),
                    (x0 + 1, y0, tx * (1.0 - ty)),
                    (x0, y0 + 1, (1.0 - tx) * ty),
                    (x0 + 1, y0 + 1, tx * ty),
                ];
                let (mut c, mut s, mut wsum) = (0.0, 0.0, 0.0);
                for (cx, cy, w) in taps {
                    if w == 0.0 {
                        continue;
                    }
                    if let Some([dc, ds]) = self.grid_doubled(cx, cy) {
                        c += w * dc;
                        s += w * ds;
                        wsum += w;
                    }
                }
                if wsum == 0.0 {
                    return None;
                }
                Axis::from_doubled(c / wsum, s / wsum)
            }
        }
    }

    /// Unit direction of [`Self::axis_at`] alone, with fewer divisions on
    /// the bilinear interior path.
    #[inline]
    pub(crate) fn dir_at(&self, x: f64, y: f64, method: InterpolationMethod) -> Option<[f64; 2]> {
        if method == InterpolationMethod::NearestNeighbor || !(x.abs() < MAX_COORDINATE && y.abs() < MAX_COORDINATE) {
            return self.axis_at(x, y, method).map(|a| a.dir);
        }
        let (x0, y0) = (floor_i64(x), floor_i64(y));
        if !(x0 >= 0 && y0 >= 0 && x0 + 1 < self.width as i64 && y0 + 1 < self.height as i64) {
            return self.axis_at(x, y, method).map(|a| a.dir);
        }
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        let i = y0 as usize * self.width + x0 as usize;
        let j = i + self.width;
        let (a, b) = (&self.doubled[i..i + 2], &self.doubled[j..j + 2]);
        let (a0, a1, b0, b1) = (a[0], a[1], b[0], b[1]);
        let (u, v) = (1.0 - tx, 1.0 - ty);
        let (w00, w10, w01, w11) = (u * v, tx * v, u * ty, tx * ty);
        let c = w00 * a0[0] + w10 * a1[0] + w01 * b0[0] + w11 * b1[0];
        let s = w00 * a0[1] + w10 * a1[1] + w01 * b0[1] + w11 * b1[1];
        let wsum = w00 * a0[2] + w10 * a1[2] + w01 * b0[2] + w11 * b1[2];
        let len = (c * c + s * s).sqrt();
        if wsum == 0.0 || !(len >= MIN_RESULTANT * wsum) {
            return None;
        }
        // |(len + c, s)|^2 = 2 len (len + c)
        let h = c + len;
        let n2 = 2.0 * len * h;
        if n2 == 0.0 {
            return Some([0.0, 1.0]);
        }
        let inv = 1.0 / n2.sqrt();
        Some(if s < 0.0 { [-h * inv, -s * inv] } else { [h * inv, s * inv] })
    }

    /// Orientation at decimal coordinates.
    ///
    /// Nearest neighbor returns the closest valid one of the four surrounding
    /// grid points. Bilinear averages the valid surrounding doubled-angle
    /// vectors by area weight and is absent when they cancel.
    pub fn orientation_at(&self, x: f64, y: f64, method: InterpolationMethod) -> Option<f64> {
        self.axis_at(x, y, method).map(|a| a.angle())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Maximum disagreement (degrees) for two estimates to be averaged.
    pub angle_threshold_deg: f64,
    /// Outward extrapolation distance in pixels (8-neighbor dilation steps).
    pub extrapolation_radius: usize,
    /// Smoothing window of the fine-scale gradient estimator.
    pub smoothing_window: usize,
    /// Smoothing window of the coarse-scale gradient estimator, the second judge.
    pub coarse_window: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            angle_threshold_deg: 15.0,
            extrapolation_radius: 16,
            smoothing_window: 33,
            coarse_window: 63,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_threshold_deg > 0.0 && self.angle_threshold_deg < 90.0) {
            return Err(Error::param("fusion angle threshold must lie in (0, 90) degrees"));
        }
        if self.smoothing_window == 0 || self.coarse_window == 0 {
            return Err(Error::param("orientation smoothing windows must be positive"));
        }
        Ok(())
    }
}

fn sobel(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = img.dims();
    let px = img.pixels();
    let at = |x: i64, y: i64| {
        let x = x.clamp(0, w as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        px[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Averaged-squared-gradient orientation estimate.
///
/// Sobel gradients of foreground pixels are accumulated as `(gx^2 - gy^2,
/// 2 gx gy)` over a square window; the ridge orientation is half the angle of
/// the sum, turned by 90 degrees. Background pixels and pixels whose
/// accumulated vector falls below the coherence floor are invalid.
pub fn estimate_gradient_of(img: &GrayImage, smoothing_window: usize) -> OrientationField {
    let (w, h) = img.dims();
    let (gx, gy) = sobel(img);
    let mask = img.mask();
    let max_energy = (0..w * h)
        .filter(|&i| mask[i])
        .map(|i| gx[i] * gx[i] + gy[i] * gy[i])
        .fold(0.0, f64::max);
    let fg = |i: usize| if mask[i] { 1.0 } else { 0.0 };
    let sum_a = IntegralImage::new(w, h, |i| fg(i) * (gx[i] * gx[i] - gy[i] * gy[i]));
    let sum_b = IntegralImage::new(w, h, |i| fg(i) * 2.0 * gx[i] * gy[i]);
    let count = IntegralImage::new(w, h, fg);
    let half = smoothing_window / 2;

    let angles = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !mask[i] || max_energy == 0.0 {
                return None;
            }
            let (x, y) = (i % w, i / w);
            let a = sum_a.window_sum(x, y, half);
            let b = sum_b.window_sum(x, y, half);
            let area = count.window_sum(x, y, half);
            if (a * a + b * b).sqrt() < COHERENCE_FLOOR * area * max_energy {
                return None;
            }
            Some(wrap_angle(0.5 * b.atan2(a) + FRAC_PI_2))
        })
        .collect();
    OrientationField::new(w, h, angles).expect("dimensions come from a valid image")
}

/// Fuses two orientation estimates pixel by pixel.
///
/// Where both are valid and disagree by less than the threshold, the result is
/// their doubled-angle mean. Where they disagree or either abstains, the pixel
/// is invalid.
pub fn fuse_orientation_fields(
    of1: &OrientationField,
    of2: &OrientationField,
    cfg: &FusionConfig,
) -> Result<OrientationField> {
    if of1.dims() != of2.dims() {
        return Err(Error::DimensionMismatch {
            expected: of1.dims(),
            found: of2.dims(),
        });
    }
    let threshold = cfg.angle_threshold_deg.to_radians();
    let angles = of1
        .angles
        .iter()
        .zip(&of2.angles)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) if angular_difference(*a, *b) < threshold => circular_mean(&[*a, *b]),
            _ => None,
        })
        .collect();
    OrientationField::new(of1.width, of1.height, angles)
}

/// Invalid pixels not 4-connected to the raster border through invalid pixels.
pub fn inner_gaps(of: &OrientationField) -> Vec<bool> {
    let (w, h) = of.dims();
    let mut outside = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h)
        .filter(|&i| {
            let (x, y) = (i % w, i / w);
            (x == 0 || y == 0 || x == w - 1 || y == h - 1) && of.angles[i].is_none()
        })
        .collect();
    for &i in &stack {
        outside[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !outside[j] && of.angles[j].is_none() {
                outside[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    (0..w * h)
        .map(|i| of.angles[i].is_none() && !outside[i])
        .collect()
}

fn average_angles(angles: &[f64]) -> Option<f64> {
    circular_mean(angles)
}

/// Fills inner gaps, then extrapolates the valid region outward.
///
/// Both phases average the valid 8-neighbors in synchronized iterations
/// (reads see only the previous iteration). Extrapolation runs `radius`
/// iterations. Originally valid pixels are never modified. The resulting
/// valid mask is the foreground segmentation.
pub fn reconstruct_and_extrapolate(of: &OrientationField, radius: usize) -> OrientationField {
    let (w, h) = of.dims();
    let mut angles = of.angles.clone();
    let gaps = inner_gaps(of);
    fill_from_neighbors(w, h, &mut angles, &gaps, None, average_angles);
    if angles.iter().any(Option::is_some) {
        let everywhere = vec![true; w * h];
        fill_from_neighbors(w, h, &mut angles, &everywhere, Some(radius), average_angles);
    }
    OrientationField::new(w, h, angles).expect("dimensions unchanged")
}
