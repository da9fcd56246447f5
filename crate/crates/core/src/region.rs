//! Curved regions: grids of unit-spaced points that follow the local flow.
//!
//! A region centered at `(xc, yc)` has `2p + 1` curves of `2q + 1` points.
//! Curve midpoints are found by walking orthogonally to the orientation from
//! the center; each curve then follows the orientation in both directions.
//! Row `r` of the grid is curve `r`, column `c` is the position along it, and
//! `points[p][q]` is the center.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, InterpolationMethod};
use crate::orientation::{Axis, OrientationField};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Half-count of curves (`2p + 1` curves).
    pub p: usize,
    /// Half-count of points per curve (`2q + 1` points).
    pub q: usize,
    /// Orientation change (degrees) between consecutive midpoint steps that
    /// is taken as the presence of a core point.
    pub core_stop_threshold_deg: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            p: 16,
            q: 32,
            core_stop_threshold_deg: 20.0,
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::param("region half-counts p and q must be at least 1"));
        }
        if !(self.core_stop_threshold_deg > 0.0 && self.core_stop_threshold_deg < 90.0) {
            return Err(Error::param("core stop threshold must lie in (0, 90) degrees"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvedRegion {
    center: Point,
    p: usize,
    q: usize,
    points: Vec<Option<Point>>,
    interp: InterpolationMethod,
}

impl CurvedRegion {
    pub fn center(&self) -> Point {
        self.center
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rows(&self) -> usize {
        2 * self.p + 1
    }

    pub fn cols(&self) -> usize {
        2 * self.q + 1
    }

    /// Orientation interpolation used to build the region.
    pub fn interpolation(&self) -> InterpolationMethod {
        self.interp
    }

    pub fn point(&self, row: usize, col: usize) -> Option<Point> {
        self.points[row * self.cols() + col]
    }

    pub fn curve(&self, row: usize) -> &[Option<Point>] {
        let c = self.cols();
        &self.points[row * c..(row + 1) * c]
    }

    pub fn midpoints(&self) -> Vec<Option<Point>> {
        (0..self.rows()).map(|r| self.point(r, self.q)).collect()
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn neg(a: [f64; 2]) -> [f64; 2] {
    [-a[0], -a[1]]
}

/// Unit vector orthogonal to the axis.
#[inline]
fn normal(axis: &Axis) -> [f64; 2] {
    [-axis.dir[1], axis.dir[0]]
}

/// Picks the sign of `v` that turns least from `prev`.
#[inline]
fn align(v: [f64; 2], prev: [f64; 2]) -> [f64; 2] {
    if dot(v, prev) < 0.0 {
        neg(v)
    } else {
        v
    }
}

/// One curve arm being traced from its midpoint.
struct Arm {
    pos: Point,
    dir: [f64; 2],
    prev: [f64; 2],
    /// Grid index of the last recorded point and the step between points.
    idx: usize,
    stride: isize,
}

/// Traces all arms in lockstep, up to `steps` unit steps each, so the
/// independent walks overlap. An arm stops at the first landing point without
/// an orientation; that point is not recorded.
fn trace_arms(
    of: &OrientationField,
    mut arms: Vec<Arm>,
    interp: InterpolationMethod,
    steps: usize,
    points: &mut [Option<Point>],
) {
    for _ in 0..steps {
        arms.retain_mut(|arm| {
            let d = align(arm.dir, arm.prev);
            arm.pos = [arm.pos[0] + d[0], arm.pos[1] + d[1]];
            let Some(dir) = of.dir_at(arm.pos[0], arm.pos[1], interp) else {
                return false;
            };
            arm.idx = arm.idx.wrapping_add_signed(arm.stride);
            points[arm.idx] = Some(arm.pos);
            arm.dir = dir;
            arm.prev = d;
            true
        });
        if arms.is_empty() {
            break;
        }
    }
}

/// Constructs the curved region centered at `center`.
pub fn build_curved_region(
    of: &OrientationField,
    center: Point,
    cfg: &RegionConfig,
    interp: InterpolationMethod,
) -> Result<CurvedRegion> {
    let center_axis = of
        .axis_at(center[0], center[1], interp)
        .ok_or(Error::CenterOutsideField {
            x: center[0],
            y: center[1],
        })?;
    let (p, q) = (cfg.p, cfg.q);
    let cols = 2 * q + 1;
    let mut points = vec![None; (2 * p + 1) * cols];
    let stop = cfg.core_stop_threshold_deg.to_radians();

    // Midpoint r carries its position, orientation and a tangent whose sign
    // is continuous with the center's.
    let mut midpoints: Vec<Option<(Point, Axis, [f64; 2])>> = vec![None; 2 * p + 1];
    midpoints[p] = Some((center, center_axis, center_axis.dir));
    for side in [1i64, -1] {
        let mut pos = center;
        let mut axis = center_axis;
        let mut tangent = center_axis.dir;
        let mut prev = if side > 0 {
            normal(&center_axis)
        } else {
            neg(normal(&center_axis))
        };
        for k in 1..=p as i64 {
            let d = align(normal(&axis), prev);
            pos = [pos[0] + d[0], pos[1] + d[1]];
            let Some(next) = of.axis_at(pos[0], pos[1], interp) else {
                break;
            };
            if next.difference(&axis) > stop {
                break;
            }
            tangent = align(next.dir, tangent);
            midpoints[(p as i64 + side * k) as usize] = Some((pos, next, tangent));
            axis = next;
            prev = d;
        }
    }

    let mut arms = Vec::with_capacity(2 * midpoints.len());
    for (r, mid) in midpoints.iter().enumerate() {
        let Some((pos, axis, tangent)) = *mid else {
            continue;
        };
        let base = r * cols + q;
        points[base] = Some(pos);
        for (stride, heading) in [(1, tangent), (-1, neg(tangent))] {
            arms.push(Arm {
                pos,
                dir: axis.dir,
                prev: heading,
                idx: base,
                stride,
            });
        }
    }
    trace_arms(of, arms, interp, q, &mut points);

    Ok(CurvedRegion {
        center,
        p,
        q,
        points,
        interp,
    })
}

/// Integrated orientation change along a region's central curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    /// Radians, in `[0, pi]`.
    pub value: f64,
    /// True when either arm of the central curve was cut short.
    pub partial: bool,
}

/// Sum of the undirected orientation differences between the central point of
/// the central curve and each of its two end points.
pub fn estimate_curvature(region: &CurvedRegion, of: &OrientationField) -> Curvature {
    let curve = region.curve(region.p);
    let q = region.q;
    let interp = region.interp;
    let Some(center) = curve[q] else {
        return Curvature {
            value: 0.0,
            partial: true,
        };
    };
    let center_axis = of.axis_at(center[0], center[1], interp);
    let forward = curve[q + 1..].iter().rposition(Option::is_some).map(|i| q + 1 + i);
    let backward = curve[..q].iter().position(Option::is_some);
    let partial = forward != Some(2 * q) || backward != Some(0);
    let value = match center_axis {
        None => 0.0,
        Some(c) => [forward, backward]
            .into_iter()
            .flatten()
            .filter_map(|i| curve[i])
            .filter_map(|pt| of.axis_at(pt[0], pt[1], interp))
            .map(|a| c.difference(&a))
            .sum(),
    };
    Curvature { value, partial }
}

/// Per-pixel curvature raster.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMap {
    width: usize,
    height: usize,
    values: Vec<Option<f64>>,
}

impl CurvatureMap {
    pub fn new(width: usize, height: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::BufferSize {
                expected: width * height,
                found: values.len(),
            });
        }
        Ok(Self { width, height, values })
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
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }
}

/// Curvature of the central curve at every pixel that is foreground in `img`
/// and valid in `of`. Only the central curve is built (`p = 0`).
pub fn curvature_map(
    img: &GrayImage,
    of: &OrientationField,
    cfg: &RegionConfig,
    interp: InterpolationMethod,
) -> Result<CurvatureMap> {
    if img.dims() != of.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: of.dims(),
        });
    }
    let (w, h) = of.dims();
    let central = RegionConfig { p: 0, ..*cfg };
    let values = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if !img.mask()[i] || !of.is_valid(x, y) {
                return None;
            }
            build_curved_region(of, [x as f64, y as f64], &central, interp)
                .ok()
                .map(|r| estimate_curvature(&r, of).value)
        })
        .collect();
    CurvatureMap::new(w, h, values)
}
