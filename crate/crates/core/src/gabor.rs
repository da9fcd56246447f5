//! Gabor filtering, straight and along curved regions.
//!
//! The curved filter maps the curved region around a pixel to a rectangular
//! array of interpolated gray values and multiplies it point-wise with an
//! unrotated kernel. Rows of the array run across the ridges and carry the
//! cosine (`sigma_x`); columns run along the ridges (`sigma_y`). The straight
//! filter is the classic per-pixel rotated kernel on the pixel grid.

use std::f64::consts::{FRAC_PI_2, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::RidgeFrequencyMap;
use crate::image::{GrayImage, Interpolation, InterpolationMethod, Normalization};
use crate::orientation::OrientationField;
use crate::region::{build_curved_region, CurvedRegion, RegionConfig};

/// Gray level of pixels outside the enhanced foreground.
pub const BACKGROUND: f64 = 255.0;
/// Share of present patch entries below which a pixel is reported as weakly
/// supported.
pub const LOW_PRESENCE_FRACTION: f64 = 0.25;

/// Gabor kernel `exp(-(xt^2 / sx^2 + yt^2 / sy^2) / 2) * cos(2 pi f xt)` with
/// `xt = x cos t + y sin t` and `yt = -x sin t + y cos t`.
#[inline]
pub fn gabor_kernel(theta: f64, f: f64, sigma_x: f64, sigma_y: f64, x: f64, y: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let xt = x * c + y * s;
    let yt = -x * s + y * c;
    (-0.5 * (xt * xt / (sigma_x * sigma_x) + yt * yt / (sigma_y * sigma_y))).exp() * (TAU * f * xt).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowShape {
    #[default]
    Full,
    /// Only entries inside the ellipse inscribed in the window.
    Ellipse,
}

impl std::str::FromStr for WindowShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "ellipse" => Ok(Self::Ellipse),
            other => Err(Error::param(format!("unknown window shape `{other}`"))),
        }
    }
}

impl WindowShape {
    /// Whether offset `(a, b)` across/along the ridges lies in the window of
    /// half-sizes `p`, `q`.
    #[inline]
    fn contains(self, a: f64, b: f64, p: usize, q: usize) -> bool {
        let (hp, hq) = (p as f64 + 0.5, q as f64 + 0.5);
        match self {
            Self::Full => a.abs() <= hp && b.abs() <= hq,
            Self::Ellipse => (a / hp).powi(2) + (b / hq).powi(2) <= 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    #[default]
    Curved,
    Straight,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "curved" => Ok(Self::Curved),
            "straight" => Ok(Self::Straight),
            other => Err(Error::param(format!("unknown filter kind `{other}`"))),
        }
    }
}

/// Filter parameters. The window spans `2p + 1` samples across the ridges and
/// `2q + 1` along them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaborParams {
    pub filter: FilterKind,
    /// Gaussian spread across the ridges, along the cosine.
    pub sigma_x: f64,
    /// Gaussian spread along the ridges.
    pub sigma_y: f64,
    pub window: WindowShape,
    pub p: usize,
    pub q: usize,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self {
            filter: FilterKind::Curved,
            sigma_x: 4.0,
            sigma_y: 4.0,
            window: WindowShape::Full,
            p: 16,
            q: 32,
        }
    }
}

/// Named parameter sets: `(name, description)`.
pub const PRESETS: [(&str, &str); 6] = [
    ("ellipse-21x21", "curved, 21x21 region, elliptical window, sigma 4"),
    ("full-33x65", "curved, 33x65 region, full window, sigma 4"),
    ("ellipse-33x65", "curved, 33x65 region, elliptical window, sigma 4"),
    ("wide-65x65", "curved, 65x65 region, full window, sigma 8"),
    ("smooth-33x65", "curved, 33x65 region, full window, sigma 16 across and 32 along"),
    ("straight-11x11", "straight, 11x11 window, sigma 4"),
];

impl GaborParams {
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        Ok(match name {
            "ellipse-21x21" => Self {
                window: WindowShape::Ellipse,
                p: 10,
                q: 10,
                ..base
            },
            "full-33x65" => base,
            "ellipse-33x65" => Self {
                window: WindowShape::Ellipse,
                ..base
            },
            "wide-65x65" => Self {
                sigma_x: 8.0,
                sigma_y: 8.0,
                p: 32,
                q: 32,
                ..base
            },
            "smooth-33x65" => Self {
                sigma_x: 16.0,
                sigma_y: 32.0,
                ..base
            },
            "straight-11x11" => Self {
                filter: FilterKind::Straight,
                p: 5,
                q: 5,
                ..base
            },
            other => {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                return Err(Error::param(format!(
                    "unknown preset `{other}` (known: {})",
                    names.join(", ")
                )));
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0) {
            return Err(Error::param("gabor sigmas must be positive"));
        }
        if self.p == 0 || self.q == 0 {
            return Err(Error::param("gabor window half-sizes must be at least 1"));
        }
        Ok(())
    }

    /// Region geometry of the curved filter.
    pub fn region(&self, core_stop_threshold_deg: f64) -> RegionConfig {
        RegionConfig {
            p: self.p,
            q: self.q,
            core_stop_threshold_deg,
        }
    }
}

/// Gray values of a curved region, `2p + 1` rows by `2q + 1` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPatch {
    p: usize,
    q: usize,
    values: Vec<Option<f64>>,
}

impl InterpolatedPatch {
    pub fn new(p: usize, q: usize, values: Vec<Option<f64>>) -> Result<Self> {
        let n = (2 * p + 1) * (2 * q + 1);
        if values.len() != n {
            return Err(Error::BufferSize {
                expected: n,
                found: values.len(),
            });
        }
        Ok(Self { p, q, values })
    }

    pub fn from_fn(p: usize, q: usize, f: impl Fn(usize, usize) -> Option<f64>) -> Self {
        let cols = 2 * q + 1;
        let values = (0..(2 * p + 1) * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { p, q, values }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * (2 * self.q + 1) + col]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().flatten().count()
    }
}

/// Interpolated gray value at every point of the region.
pub fn sample_patch(region: &CurvedRegion, img: &GrayImage, interp: InterpolationMethod) -> InterpolatedPatch {
    InterpolatedPatch::from_fn(region.p(), region.q(), |r, c| {
        let pt = region.point(r, c)?;
        img.interpolate(pt[0], pt[1], interp)
    })
}

/// Unrotated kernel over a patch, split into the factor along the ridges
/// (fixed) and the factor across them (frequency dependent).
struct PatchKernel {
    p: usize,
    q: usize,
    sigma_x: f64,
    along: Vec<f64>,
    inside: Vec<bool>,
}

impl PatchKernel {
    fn new(params: &GaborParams, p: usize, q: usize) -> Self {
        let along = (0..=2 * q)
            .map(|l| {
                let b = l as f64 - q as f64;
                (-0.5 * b * b / (params.sigma_y * params.sigma_y)).exp()
            })
            .collect();
        let inside = (0..(2 * p + 1) * (2 * q + 1))
            .map(|i| {
                let (k, l) = (i / (2 * q + 1), i % (2 * q + 1));
                params.window.contains(k as f64 - p as f64, l as f64 - q as f64, p, q)
            })
            .collect();
        Self {
            p,
            q,
            sigma_x: params.sigma_x,
            along,
            inside,
        }
    }

    fn across(&self, f: f64) -> Vec<f64> {
        (0..=2 * self.p)
            .map(|k| {
                let a = k as f64 - self.p as f64;
                (-0.5 * a * a / (self.sigma_x * self.sigma_x)).exp() * (TAU * f * a).cos()
            })
            .collect()
    }

    /// `sum(A g) / sum(|g|)` over present entries inside the window.
    fn apply(&self, values: impl Fn(usize, usize) -> Option<f64>, f: f64) -> f64 {
        let across = self.across(f);
        let cols = 2 * self.q + 1;
        let (mut acc, mut norm) = (0.0, 0.0);
        for (k, &gk) in across.iter().enumerate() {
            for (l, &gl) in self.along.iter().enumerate() {
                if !self.inside[k * cols + l] {
                    continue;
                }
                if let Some(v) = values(k, l) {
                    let g = gk * gl;
                    acc += v * g;
                    norm += g.abs();
                }
            }
        }
        if norm > 0.0 {
            acc / norm
        } else {
            0.0
        }
    }
}

/// Filter response of a patch at frequency `f`, normalized by the absolute
/// kernel mass of the entries used. `None` when the center entry is absent.
pub fn filter_pixel(patch: &InterpolatedPatch, f: f64, params: &GaborParams) -> Option<f64> {
    patch.get(patch.p, patch.q)?;
    let kernel = PatchKernel::new(params, patch.p, patch.q);
    Some(kernel.apply(|k, l| patch.get(k, l), f))
}

/// Per-image counts from an enhancement pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnhanceStats {
    pub filtered: usize,
    /// Pixels left unfiltered because their center sample was missing.
    pub passed_through: usize,
    /// Filtered pixels whose window had fewer than a quarter of its entries.
    pub low_presence: usize,
}

enum PixelOutcome {
    Background,
    Filtered { value: f64, low_presence: bool },
    PassedThrough(f64),
}

fn check_inputs(img: &GrayImage, of: &OrientationField, rf: &RidgeFrequencyMap, params: &GaborParams) -> Result<()> {
    params.validate()?;
    for found in [of.dims(), rf.dims()] {
        if found != img.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                found,
            });
        }
    }
    let (w, _) = img.dims();
    for (i, &m) in img.mask().iter().enumerate() {
        if m && of.angles()[i].is_some() && rf.values()[i].is_none() {
            return Err(Error::MissingFrequency { x: i % w, y: i / w });
        }
    }
    Ok(())
}

fn finish(img: &GrayImage, outcomes: Vec<PixelOutcome>, norm: &Normalization) -> Result<(GrayImage, EnhanceStats)> {
    let mut stats = EnhanceStats::default();
    let mut pixels = Vec::with_capacity(outcomes.len());
    let mut mask = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (v, m) = match o {
            PixelOutcome::Background => (BACKGROUND, false),
            PixelOutcome::Filtered { value, low_presence } => {
                stats.filtered += 1;
                stats.low_presence += usize::from(low_presence);
                (value, true)
            }
            PixelOutcome::PassedThrough(v) => {
                stats.passed_through += 1;
                (v, true)
            }
        };
        pixels.push(v);
        mask.push(m);
    }
    let (w, h) = img.dims();
    let raw = GrayImage::new(w, h, pixels, mask)?;
    Ok((norm.local(&raw), stats))
}

/// Curved Gabor filtering of every foreground pixel with a valid orientation,
/// followed by local normalization with `norm`. Other pixels become background (255).
pub fn enhance_curved(
    img: &GrayImage,
    of: &OrientationField,
    rf: &RidgeFrequencyMap,
    params: &GaborParams,
    core_stop_threshold_deg: f64,
    interp: Interpolation,
    norm: &Normalization,
) -> Result<(GrayImage, EnhanceStats)> {
    check_inputs(img, of, rf, params)?;
    let region_cfg = params.region(core_stop_threshold_deg);
    region_cfg.validate()?;
    let kernel = PatchKernel::new(params, params.p, params.q);
    let total = ((2 * params.p + 1) * (2 * params.q + 1)) as f64;
    let w = img.width();
    let outcomes = (0..img.pixels().len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if !img.mask()[i] || !of.is_valid(x, y) {
                return PixelOutcome::Background;
            }
            let f = rf.values()[i].expect("checked above");
            let Ok(region) = build_curved_region(of, [x as f64, y as f64], &region_cfg, interp.orientation) else {
                return PixelOutcome::PassedThrough(img.pixels()[i]);
            };
            let patch = sample_patch(&region, img, interp.gray);
            if patch.get(params.p, params.q).is_none() {
                return PixelOutcome::PassedThrough(img.pixels()[i]);
            }
            PixelOutcome::Filtered {
                value: kernel.apply(|k, l| patch.get(k, l), f),
                low_presence: (patch.present_count() as f64) < LOW_PRESENCE_FRACTION * total,
            }
        })
        .collect();
    finish(img, outcomes, norm)
}

/// Rotated kernel evaluated row by row. Along a row the Gaussian exponent is
/// quadratic and the cosine phase linear in `dx`, so both are advanced by
/// multiplicative recurrences instead of per-tap `exp` and `cos`.
struct StraightKernel {
    theta: f64,
    f: f64,
    sin: f64,
    cos: f64,
    params: GaborParams,
    /// Quadratic coefficient of the exponent in `dx`.
    alpha: f64,
}

impl StraightKernel {
    fn new(theta: f64, f: f64, params: &GaborParams) -> Self {
        let (sin, cos) = theta.sin_cos();
        let (vx, vy) = (params.sigma_x * params.sigma_x, params.sigma_y * params.sigma_y);
        Self {
            theta,
            f,
            sin,
            cos,
            params: *params,
            alpha: -0.5 * (cos * cos / vx + sin * sin / vy),
        }
    }

    #[inline]
    fn across_along(&self, dx: f64, dy: f64) -> (f64, f64) {
        (dx * self.cos + dy * self.sin, -dx * self.sin + dy * self.cos)
    }

    /// Integer `dx` range that can hold window entries in row `dy`: the
    /// bounding rectangle's span, widened by one for rounding.
    fn row_span(&self, dy: f64) -> Option<(i64, i64)> {
        let (hp, hq) = (self.params.p as f64 + 0.5, self.params.q as f64 + 0.5);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        // |dx cos + dy sin| <= hp and |-dx sin + dy cos| <= hq
        for (k, offset, half) in [(self.cos, dy * self.sin, hp), (-self.sin, dy * self.cos, hq)] {
            if k.abs() < 1e-12 {
                if offset.abs() > half + 1e-9 {
                    return None;
                }
                continue;
            }
            let (a, b) = ((-half - offset) / k, (half - offset) / k);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        let (lo, hi) = (lo.floor() as i64 - 1, hi.ceil() as i64 + 1);
        (lo <= hi).then_some((lo, hi))
    }

    /// Calls `visit(dx, g)` for every `dx` in `lo..=hi` inside the window.
    fn for_row(&self, dy: f64, lo: i64, hi: i64, mut visit: impl FnMut(i64, f64)) {
        let p = &self.params;
        let (vx, vy) = (p.sigma_x * p.sigma_x, p.sigma_y * p.sigma_y);
        let exponent = |dx: f64| {
            let (a, b) = self.across_along(dx, dy);
            -0.5 * (a * a / vx + b * b / vy)
        };
        let x0 = lo as f64;
        let e0 = exponent(x0);
        if e0 < -600.0 || exponent(hi as f64) < -600.0 {
            // The recurrence could start from an underflowed value.
            for dx in lo..=hi {
                let (a, b) = self.across_along(dx as f64, dy);
                if p.window.contains(a, b, p.p, p.q) {
                    visit(dx, gabor_kernel(self.theta, self.f, p.sigma_x, p.sigma_y, dx as f64, dy));
                }
            }
            return;
        }
        let mut gauss = e0.exp();
        // Ratio of consecutive Gaussian values, itself scaled by a constant.
        let mut ratio = (exponent(x0 + 1.0) - e0).exp();
        let step = (2.0 * self.alpha).exp();
        let (mut ps, mut pc) = (TAU * self.f * self.across_along(x0, dy).0).sin_cos();
        let (ds, dc) = (TAU * self.f * self.cos).sin_cos();
        for dx in lo..=hi {
            let (a, b) = self.across_along(dx as f64, dy);
            if p.window.contains(a, b, p.p, p.q) {
                visit(dx, gauss * pc);
            }
            gauss *= ratio;
            ratio *= step;
            (pc, ps) = (pc * dc - ps * ds, ps * dc + pc * ds);
        }
    }
}

/// Straight Gabor filtering: the kernel is rotated so its cosine runs across
/// the local ridge flow and is evaluated at integer pixel offsets inside the
/// rotated window. Same normalization and background handling as
/// [`enhance_curved`].
pub fn enhance_straight(
    img: &GrayImage,
    of: &OrientationField,
    rf: &RidgeFrequencyMap,
    params: &GaborParams,
    norm: &Normalization,
) -> Result<(GrayImage, EnhanceStats)> {
    check_inputs(img, of, rf, params)?;
    let (w, h) = img.dims();
    let reach = ((params.p as f64 + 0.5).hypot(params.q as f64 + 0.5)).ceil() as i64;
    let total = ((2 * params.p + 1) * (2 * params.q + 1)) as f64;
    let outcomes = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let (Some(theta), true) = (of.angles()[i], img.mask()[i]) else {
                return PixelOutcome::Background;
            };
            let f = rf.values()[i].expect("checked above");
            let kernel = StraightKernel::new(theta + FRAC_PI_2, f, params);
            let (mut acc, mut norm, mut used) = (0.0, 0.0, 0usize);
            for dy in -reach..=reach {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                let Some((lo, hi)) = kernel.row_span(dy as f64) else {
                    continue;
                };
                let lo = lo.max(-(x as i64));
                let hi = hi.min((w - 1 - x) as i64);
                if lo > hi {
                    continue;
                }
                let row = (yy as usize) * w;
                kernel.for_row(dy as f64, lo, hi, |dx, g| {
                    let j = row + (x as i64 + dx) as usize;
                    if img.mask()[j] {
                        acc += img.pixels()[j] * g;
                        norm += g.abs();
                        used += 1;
                    }
                });
            }
            PixelOutcome::Filtered {
                value: acc / norm,
                low_presence: (used as f64) < LOW_PRESENCE_FRACTION * total,
            }
        })
        .collect();
    finish(img, outcomes, norm)
}
