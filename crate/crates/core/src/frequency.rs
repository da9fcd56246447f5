//! Ridge frequency estimation.
//!
//! The main estimator averages gray values along each curve of a curved
//! region, giving a profile that crosses the ridges at unit spacing. The
//! distances between consecutive maxima and between consecutive minima of
//! that profile (inter-extrema distances, IEDs) give the ridge period; their
//! spread, the ratio of the largest to the smallest, decides whether the
//! estimate is trusted. The block-based x-signature estimator is provided as a
//! baseline.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fill_from_neighbors, IntegralImage};
use crate::image::{GrayImage, Interpolation, InterpolationMethod};
use crate::orientation::{circular_mean, OrientationField};
use crate::profile::{smooth_profile, Profile1D};
use crate::region::{build_curved_region, CurvedRegion, RegionConfig};

/// Lowest accepted frequency: a ridge period of 25 pixels.
pub const MIN_FREQUENCY: f64 = 1.0 / 25.0;
/// Highest accepted frequency: a ridge period of 3 pixels.
pub const MAX_FREQUENCY: f64 = 1.0 / 3.0;

fn in_range(f: f64) -> bool {
    (MIN_FREQUENCY..=MAX_FREQUENCY).contains(&f)
}

/// Per-pixel ridge frequency in cycles per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFrequencyMap {
    width: usize,
    height: usize,
    values: Vec<Option<f64>>,
}

impl RidgeFrequencyMap {
    /// Fails when a present value lies outside `[1/25, 1/3]`.
    pub fn new(width: usize, height: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        if values.len() != width * height {
            return Err(Error::BufferSize {
                expected: width * height,
                found: values.len(),
            });
        }
        if let Some(f) = values.iter().flatten().find(|&&f| !in_range(f)) {
            return Err(Error::param(format!(
                "ridge frequency {f} outside [{MIN_FREQUENCY}, {MAX_FREQUENCY}]"
            )));
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

    pub fn valid_count(&self) -> usize {
        self.values.iter().flatten().count()
    }
}

/// Why a profile produced no frequency. Listed in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// Too few valid profile entries, or no region at all.
    ProfileInvalid,
    /// Fewer than two minima or two maxima.
    TooFewExtrema,
    /// IED spread above the threshold.
    PMaxMinExceeded,
    /// Frequency outside `[1/25, 1/3]`.
    OutOfRange,
}

impl RejectReason {
    pub const ALL: [RejectReason; 4] = [
        Self::ProfileInvalid,
        Self::TooFewExtrema,
        Self::PMaxMinExceeded,
        Self::OutOfRange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ProfileInvalid => "profile-invalid",
            Self::TooFewExtrema => "too-few-extrema",
            Self::PMaxMinExceeded => "pmaxmin-exceeded",
            Self::OutOfRange => "out-of-range",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of estimating one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfEstimate {
    /// Present iff `reject_reason` is `None`.
    pub freq: Option<f64>,
    /// IED spread of the last evaluated iteration, when IEDs existed.
    pub p_maxmin: Option<f64>,
    pub median_ied: Option<f64>,
    /// Smoothing passes applied to the profile that was evaluated last.
    pub smoothing_iterations_used: usize,
    pub reject_reason: Option<RejectReason>,
}

impl RfEstimate {
    fn rejected(reason: RejectReason, iterations: usize) -> Self {
        Self {
            freq: None,
            p_maxmin: None,
            median_ied: None,
            smoothing_iterations_used: iterations,
            reject_reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RfMethod {
    #[default]
    Curved,
    #[serde(rename = "xsig")]
    XSignature,
}

impl std::str::FromStr for RfMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "curved" => Ok(Self::Curved),
            "xsig" | "x-signature" | "xsignature" => Ok(Self::XSignature),
            other => Err(Error::param(format!("unknown ridge frequency method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub method: RfMethod,
    /// Largest accepted ratio of the largest to the smallest IED.
    pub p_maxmin_threshold: f64,
    /// Smoothing passes tried after the raw profile fails.
    pub max_smoothing: usize,
    /// Gaussian kernel used for each profile smoothing pass.
    pub smoothing_kernel_size: usize,
    pub smoothing_sigma: f64,
    /// Fraction of a curve's points that must have gray values for the curve
    /// to contribute a profile entry.
    pub min_valid_fraction: f64,
    /// Side of the square mean filter applied to the frequency image.
    pub smoothing_window: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            method: RfMethod::Curved,
            p_maxmin_threshold: 1.5,
            max_smoothing: 3,
            smoothing_kernel_size: 7,
            smoothing_sigma: 1.0,
            min_valid_fraction: 0.5,
            smoothing_window: 49,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_maxmin_threshold >= 1.0) {
            return Err(Error::param("p_maxmin threshold must be at least 1"));
        }
        if self.smoothing_kernel_size % 2 == 0 {
            return Err(Error::param("profile smoothing kernel size must be odd"));
        }
        if !(self.smoothing_sigma > 0.0) {
            return Err(Error::param("profile smoothing sigma must be positive"));
        }
        if !(self.min_valid_fraction > 0.0 && self.min_valid_fraction <= 1.0) {
            return Err(Error::param("minimum valid fraction must lie in (0, 1]"));
        }
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return Err(Error::param("frequency smoothing window must be odd"));
        }
        Ok(())
    }
}

/// Mean gray value along each curve of `region`.
///
/// An entry is invalid when fewer than `min_valid_fraction` of the curve's
/// `2q + 1` points have a gray value.
pub fn gray_profile(
    region: &CurvedRegion,
    img: &GrayImage,
    interp: InterpolationMethod,
    min_valid_fraction: f64,
) -> Profile1D {
    let needed = min_valid_fraction * region.cols() as f64;
    let entries: Vec<Option<f64>> = (0..region.rows())
        .map(|r| {
            let (sum, n) = region
                .curve(r)
                .iter()
                .flatten()
                .filter_map(|pt| img.interpolate(pt[0], pt[1], interp))
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0 && n as f64 >= needed).then(|| sum / n as f64)
        })
        .collect();
    Profile1D::from_options(&entries).expect("regions have at least one curve")
}

/// Positions of the local extrema of a profile.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extrema {
    pub minima: Vec<usize>,
    pub maxima: Vec<usize>,
}

/// Local minima and maxima.
///
/// A run of equal values flanked on both sides by strictly lower values is one
/// maximum at the run's center (rounding down); minima likewise. Runs touching
/// either end of a segment are not extrema. Invalid entries split the profile
/// into segments scanned independently.
pub fn detect_extrema(profile: &Profile1D) -> Extrema {
    let mut out = Extrema::default();
    if profile.valid_count() < 3 {
        return out;
    }
    let values = profile.values();
    let valid = profile.validity();
    let n = values.len();
    let mut start = 0;
    while start < n {
        if !valid[start] {
            start += 1;
            continue;
        }
        let mut end = start;
        while end + 1 < n && valid[end + 1] {
            end += 1;
        }
        scan_segment(&values[start..=end], start, &mut out);
        start = end + 1;
    }
    out
}

fn scan_segment(seg: &[f64], offset: usize, out: &mut Extrema) {
    let mut a = 0;
    while a < seg.len() {
        let mut b = a;
        while b + 1 < seg.len() && seg[b + 1] == seg[a] {
            b += 1;
        }
        if a > 0 && b + 1 < seg.len() {
            let (left, right, v) = (seg[a - 1], seg[b + 1], seg[a]);
            let center = offset + (a + b) / 2;
            if left < v && right < v {
                out.maxima.push(center);
            } else if left > v && right > v {
                out.minima.push(center);
            }
        }
        a = b + 1;
    }
}

/// Gaps between consecutive maxima followed by gaps between consecutive
/// minima. A minimum and a maximum are never paired.
pub fn inter_extrema_distances(minima: &[usize], maxima: &[usize]) -> Vec<f64> {
    let gaps = |v: &[usize]| -> Vec<f64> { v.windows(2).map(|w| (w[1] - w[0]) as f64).collect() };
    let mut out = gaps(maxima);
    out.extend(gaps(minima));
    out
}

/// Median and spread of a set of IEDs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IedStatistics {
    /// Mean of the two central values for an even count.
    pub median: f64,
    /// Largest IED over smallest IED.
    pub p_maxmin: f64,
}

pub fn ied_statistics(ieds: &[f64]) -> Option<IedStatistics> {
    if ieds.is_empty() {
        return None;
    }
    let mut v = ieds.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    Some(IedStatistics {
        median,
        p_maxmin: v[n - 1] / v[0],
    })
}

/// Frequency of a gray-level profile, smoothing it up to `cfg.max_smoothing`
/// times until the IEDs are consistent.
pub fn estimate_rf(profile: &Profile1D, cfg: &RfConfig) -> RfEstimate {
    if profile.valid_count() < 3 {
        return RfEstimate::rejected(RejectReason::ProfileInvalid, 0);
    }
    let mut current = profile.clone();
    let mut last = RfEstimate::rejected(RejectReason::TooFewExtrema, 0);
    for s in 0..=cfg.max_smoothing {
        if s > 0 {
            current = smooth_profile(&current, cfg.smoothing_kernel_size, cfg.smoothing_sigma)
                .expect("validated smoothing parameters");
        }
        let ext = detect_extrema(&current);
        if ext.minima.len() < 2 || ext.maxima.len() < 2 {
            last = RfEstimate::rejected(RejectReason::TooFewExtrema, s);
            continue;
        }
        let stats = ied_statistics(&inter_extrema_distances(&ext.minima, &ext.maxima))
            .expect("two maxima give an IED");
        let freq = 1.0 / stats.median;
        let reason = if stats.p_maxmin > cfg.p_maxmin_threshold {
            Some(RejectReason::PMaxMinExceeded)
        } else if !in_range(freq) {
            Some(RejectReason::OutOfRange)
        } else {
            None
        };
        last = RfEstimate {
            freq: reason.is_none().then_some(freq),
            p_maxmin: Some(stats.p_maxmin),
            median_ied: Some(stats.median),
            smoothing_iterations_used: s,
            reject_reason: reason,
        };
        if reason.is_none() {
            break;
        }
    }
    last
}

/// Counts of rejected estimates by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionHistogram {
    counts: [usize; 4],
}

impl RejectionHistogram {
    pub fn record(&mut self, reason: RejectReason) {
        self.counts[reason as usize] += 1;
    }

    pub fn count(&self, reason: RejectReason) -> usize {
        self.counts[reason as usize]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RejectReason, usize)> + '_ {
        RejectReason::ALL.into_iter().map(|r| (r, self.count(r)))
    }
}

/// Bookkeeping of a frequency image computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RfStats {
    /// Foreground pixels (or blocks, for x-signature) with an accepted estimate.
    pub estimated: usize,
    pub rejected: RejectionHistogram,
    /// Units filled from neighbors.
    pub filled: usize,
    /// Units with no estimated neighbor chain, set to the global mean.
    pub fallback: usize,
}

/// Fills `None` foreground entries from their neighbors, then with the mean of
/// the estimates for components the neighbor fill cannot reach.
fn fill_foreground(
    width: usize,
    height: usize,
    values: &mut [Option<f64>],
    foreground: &[bool],
    stats: &mut RfStats,
) -> Result<()> {
    let estimates: Vec<f64> = values.iter().flatten().copied().collect();
    if estimates.is_empty() {
        return Err(Error::NoRidgeFrequency);
    }
    let global = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let missing = |v: &[Option<f64>]| (0..v.len()).filter(|&i| foreground[i] && v[i].is_none()).count();
    let before = missing(values);
    fill_from_neighbors(width, height, values, foreground, None, |n| {
        Some(n.iter().sum::<f64>() / n.len() as f64)
    });
    let after = missing(values);
    stats.filled = before - after;
    stats.fallback = after;
    for (v, &fg) in values.iter_mut().zip(foreground) {
        if fg && v.is_none() {
            *v = Some(global);
        }
    }
    Ok(())
}

/// Mean over a `window x window` square intersected with the foreground,
/// clamped to the accepted range; background stays empty.
fn smooth_and_clamp(width: usize, height: usize, values: &[Option<f64>], foreground: &[bool], window: usize) -> Vec<Option<f64>> {
    let sum = IntegralImage::new(width, height, |i| if foreground[i] { values[i].unwrap_or(0.0) } else { 0.0 });
    let count = IntegralImage::new(width, height, |i| if foreground[i] && values[i].is_some() { 1.0 } else { 0.0 });
    let half = window / 2;
    (0..width * height)
        .map(|i| {
            if !foreground[i] {
                return None;
            }
            let (x, y) = (i % width, i / width);
            let f = sum.window_sum(x, y, half) / count.window_sum(x, y, half);
            Some(f.clamp(MIN_FREQUENCY, MAX_FREQUENCY))
        })
        .collect()
}

fn check_dims(img: &GrayImage, of: &OrientationField) -> Result<()> {
    if img.dims() != of.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: of.dims(),
        });
    }
    Ok(())
}

/// Estimate for a single pixel from its curved region.
pub fn estimate_rf_at(
    img: &GrayImage,
    of: &OrientationField,
    center: [f64; 2],
    region: &RegionConfig,
    cfg: &RfConfig,
    interp: Interpolation,
) -> RfEstimate {
    match build_curved_region(of, center, region, interp.orientation) {
        Ok(r) => estimate_rf(&gray_profile(&r, img, interp.gray, cfg.min_valid_fraction), cfg),
        Err(_) => RfEstimate::rejected(RejectReason::ProfileInvalid, 0),
    }
}

/// Ridge frequency image from curved-region profiles.
///
/// Every foreground pixel of `img` is estimated; rejected pixels are filled by
/// iterative averaging of estimated 8-neighbors, then the image is smoothed by
/// a foreground-masked square mean filter and clamped to `[1/25, 1/3]`.
pub fn rf_image(
    img: &GrayImage,
    of: &OrientationField,
    region: &RegionConfig,
    cfg: &RfConfig,
    interp: Interpolation,
) -> Result<(RidgeFrequencyMap, RfStats)> {
    check_dims(img, of)?;
    region.validate()?;
    cfg.validate()?;
    let (w, h) = img.dims();
    let estimates: Vec<Option<RfEstimate>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            img.mask()[i].then(|| estimate_rf_at(img, of, [(i % w) as f64, (i / w) as f64], region, cfg, interp))
        })
        .collect();

    let mut stats = RfStats::default();
    let mut values: Vec<Option<f64>> = estimates
        .iter()
        .map(|e| {
            let e = e.as_ref()?;
            match e.reject_reason {
                Some(r) => stats.rejected.record(r),
                None => stats.estimated += 1,
            }
            e.freq
        })
        .collect();
    fill_foreground(w, h, &mut values, img.mask(), &mut stats)?;
    let smoothed = smooth_and_clamp(w, h, &values, img.mask(), cfg.smoothing_window);
    Ok((RidgeFrequencyMap::new(w, h, smoothed)?, stats))
}

const BLOCK: usize = 16;
const SIGNATURE_LEN: usize = 32;
const SIGNATURE_WIDTH: usize = 16;

/// Frequency of one x-signature: the oriented window is `SIGNATURE_LEN`
/// samples across the flow by `SIGNATURE_WIDTH` along it, centered at
/// `center`, averaged along the flow.
fn xsignature_frequency(img: &GrayImage, center: [f64; 2], theta: f64, cfg: &RfConfig, interp: InterpolationMethod) -> Result<f64, RejectReason> {
    let (t, n) = ([theta.cos(), theta.sin()], [-theta.sin(), theta.cos()]);
    let needed = cfg.min_valid_fraction * SIGNATURE_WIDTH as f64;
    let entries: Vec<Option<f64>> = (0..SIGNATURE_LEN)
        .map(|k| {
            let a = k as f64 - (SIGNATURE_LEN as f64 - 1.0) / 2.0;
            let (sum, cnt) = (0..SIGNATURE_WIDTH)
                .filter_map(|d| {
                    let b = d as f64 - (SIGNATURE_WIDTH as f64 - 1.0) / 2.0;
                    img.interpolate(center[0] + a * n[0] + b * t[0], center[1] + a * n[1] + b * t[1], interp)
                })
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            (cnt > 0 && cnt as f64 >= needed).then(|| sum / cnt as f64)
        })
        .collect();
    let signature = Profile1D::from_options(&entries).expect("nonempty signature");
    if signature.valid_count() < 3 {
        return Err(RejectReason::ProfileInvalid);
    }
    let peaks = detect_extrema(&signature).maxima;
    if peaks.len() < 2 {
        return Err(RejectReason::TooFewExtrema);
    }
    let freq = (peaks.len() - 1) as f64 / (peaks[peaks.len() - 1] - peaks[0]) as f64;
    if in_range(freq) {
        Ok(freq)
    } else {
        Err(RejectReason::OutOfRange)
    }
}

/// Block-wise x-signature baseline.
///
/// Each 16x16 block takes the circular mean orientation of its pixels and the
/// mean peak spacing of an oriented 32x16 window centered on it. Blocks
/// without an estimate are filled from neighboring blocks; block values are
/// broadcast to their foreground pixels. The result is not smoothed further.
pub fn rf_image_xsignature(
    img: &GrayImage,
    of: &OrientationField,
    cfg: &RfConfig,
    interp: InterpolationMethod,
) -> Result<(RidgeFrequencyMap, RfStats)> {
    check_dims(img, of)?;
    cfg.validate()?;
    let (w, h) = img.dims();
    let (bw, bh) = (w.div_ceil(BLOCK), h.div_ceil(BLOCK));
    let pixels_of = |b: usize| {
        let (bx, by) = (b % bw, b / bw);
        (by * BLOCK..((by + 1) * BLOCK).min(h)).flat_map(move |y| (bx * BLOCK..((bx + 1) * BLOCK).min(w)).map(move |x| y * w + x))
    };
    let block_fg: Vec<bool> = (0..bw * bh).map(|b| pixels_of(b).any(|i| img.mask()[i])).collect();
    let results: Vec<Option<Result<f64, RejectReason>>> = (0..bw * bh)
        .into_par_iter()
        .map(|b| {
            if !block_fg[b] {
                return None;
            }
            let angles: Vec<f64> = pixels_of(b).filter(|&i| img.mask()[i]).filter_map(|i| of.angles()[i]).collect();
            let Some(theta) = circular_mean(&angles) else {
                return Some(Err(RejectReason::ProfileInvalid));
            };
            let (bx, by) = ((b % bw) as f64, (b / bw) as f64);
            let half = (BLOCK as f64 - 1.0) / 2.0;
            let center = [bx * BLOCK as f64 + half, by * BLOCK as f64 + half];
            Some(xsignature_frequency(img, center, theta, cfg, interp))
        })
        .collect();

    let mut stats = RfStats::default();
    let mut blocks: Vec<Option<f64>> = results
        .iter()
        .map(|r| match r {
            Some(Ok(f)) => {
                stats.estimated += 1;
                Some(*f)
            }
            Some(Err(reason)) => {
                stats.rejected.record(*reason);
                None
            }
            None => None,
        })
        .collect();
    fill_foreground(bw, bh, &mut blocks, &block_fg, &mut stats)?;
    let values = (0..w * h)
        .map(|i| {
            let b = (i / w / BLOCK) * bw + (i % w) / BLOCK;
            if img.mask()[i] { blocks[b] } else { None }
        })
        .collect();
    Ok((RidgeFrequencyMap::new(w, h, values)?, stats))
}
