//! Synthetic ridge patterns with analytic ground truth.
//!
//! Noise is drawn from `ChaCha8Rng::seed_from_u64(seed)` (the ChaCha stream
//! cipher with 8 rounds) through a standard normal distribution, one draw per
//! pixel in row-major order, so a seed reproduces a pattern bit for bit.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::{RidgeFrequencyMap, MAX_FREQUENCY, MIN_FREQUENCY};
use crate::image::GrayImage;
use crate::orientation::{wrap_angle, OrientationField};
use crate::region::CurvatureMap;

/// Mean gray level of every generated pattern.
pub const PATTERN_MEAN: f64 = 127.5;

/// Half-length (in unit steps) of the central curve the curvature truth is
/// defined for: a 65-point curve.
const CURVE_HALF_STEPS: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatternKind {
    /// Straight ridges; `angle` is the direction of the wave vector.
    Parallel { angle: f64 },
    /// Rings around `center`, masked out inside `inner_radius`.
    Concentric { center: [f64; 2], inner_radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternDescriptor {
    #[serde(flatten)]
    pub kind: PatternKind,
    pub period: f64,
    pub contrast: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Analytic truths of a pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Noise-free image, with the pattern's foreground mask.
    pub clean: GrayImage,
    pub of: OrientationField,
    pub rf: RidgeFrequencyMap,
    pub curvature: CurvatureMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPattern {
    /// Noisy image as handed to the pipeline.
    pub image: GrayImage,
    pub truth: GroundTruth,
    pub descriptor: PatternDescriptor,
}

fn check_period(period: f64) -> Result<()> {
    if !(3.0..=25.0).contains(&period) {
        return Err(Error::param(format!("period must lie in [3, 25], got {period}")));
    }
    Ok(())
}

fn add_noise(clean: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if sigma == 0.0 {
        return Ok(clean.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = clean.clone();
    for v in noisy.pixels_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(noisy)
}

/// Straight sinusoidal ridges,
/// `127.5 + contrast * cos(2 pi / period * (x cos a + y sin a)) + noise`.
///
/// The ridge flow runs orthogonal to the wave vector, at `a + pi/2`.
pub fn gen_parallel(
    width: usize,
    height: usize,
    period: f64,
    angle: f64,
    contrast: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticPattern> {
    check_period(period)?;
    let (c, s) = (angle.cos(), angle.sin());
    let clean = GrayImage::from_fn(width, height, |x, y| {
        PATTERN_MEAN + contrast * (TAU / period * (x as f64 * c + y as f64 * s)).cos()
    })?;
    let image = add_noise(&clean, noise_sigma, seed)?;
    let n = width * height;
    let truth = GroundTruth {
        of: OrientationField::uniform(width, height, wrap_angle(angle + FRAC_PI_2))?,
        rf: RidgeFrequencyMap::new(width, height, vec![Some(1.0 / period); n])?,
        curvature: CurvatureMap::new(width, height, vec![Some(0.0); n])?,
        clean,
    };
    Ok(SyntheticPattern {
        image,
        truth,
        descriptor: PatternDescriptor {
            kind: PatternKind::Parallel { angle },
            period,
            contrast,
            noise_sigma,
            seed,
        },
    })
}

/// Integrated tangent-angle change along a 65-point curve on a circle of
/// radius `r`: `64 / r`, with each half capped at `pi/2` like the estimator.
pub fn concentric_curvature(r: f64) -> f64 {
    2.0 * (CURVE_HALF_STEPS / r).min(FRAC_PI_2)
}

/// Concentric rings `127.5 + contrast * cos(2 pi r / period) + noise`, where
/// `r` is the distance to `center`; pixels with `r < inner_radius` are
/// background.
#[allow(clippy::too_many_arguments)]
pub fn gen_concentric(
    width: usize,
    height: usize,
    period: f64,
    center: [f64; 2],
    inner_radius: f64,
    contrast: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticPattern> {
    check_period(period)?;
    if !(inner_radius >= period) {
        return Err(Error::param(format!(
            "inner radius {inner_radius} must be at least the period {period}"
        )));
    }
    let radius = |x: usize, y: usize| (x as f64 - center[0]).hypot(y as f64 - center[1]);
    let inside = |x: usize, y: usize| radius(x, y) >= inner_radius;
    let mask: Vec<bool> = (0..width * height).map(|i| inside(i % width, i / width)).collect();
    let clean = GrayImage::from_fn(width, height, |x, y| {
        PATTERN_MEAN + contrast * (TAU * radius(x, y) / period).cos()
    })?
    .with_mask(mask)?;
    let image = add_noise(&clean, noise_sigma, seed)?;
    let of = OrientationField::from_fn(width, height, |x, y| {
        inside(x, y).then(|| {
            let (dx, dy) = (x as f64 - center[0], y as f64 - center[1]);
            wrap_angle(dy.atan2(dx) + FRAC_PI_2)
        })
    })?;
    let freq = 1.0 / period;
    let rf = (0..width * height)
        .map(|i| inside(i % width, i / width).then_some(freq))
        .collect();
    let curvature = (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            inside(x, y).then(|| concentric_curvature(radius(x, y)))
        })
        .collect();
    let truth = GroundTruth {
        of,
        rf: RidgeFrequencyMap::new(width, height, rf)?,
        curvature: CurvatureMap::new(width, height, curvature)?,
        clean,
    };
    debug_assert!((MIN_FREQUENCY..=MAX_FREQUENCY).contains(&freq));
    Ok(SyntheticPattern {
        image,
        truth,
        descriptor: PatternDescriptor {
            kind: PatternKind::Concentric { center, inner_radius },
            period,
            contrast,
            noise_sigma,
            seed,
        },
    })
}
