//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Timings are wall clock for the whole criterion, measured on a release-level
//! optimized test build.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ridgeflow::eval::{interior_mask, normalized_cross_correlation};
use ridgeflow::frequency::{estimate_rf, ied_statistics, inter_extrema_distances, rf_image, rf_image_xsignature};
use ridgeflow::gabor::{enhance_curved, enhance_straight, gabor_kernel};
use ridgeflow::image::normalize_local;
use ridgeflow::orientation::{angular_difference, fuse_orientation_fields, reconstruct_and_extrapolate};
use ridgeflow::pipeline::{estimate_orientation, OrientationStages};
use ridgeflow::profile::Profile1D;
use ridgeflow::region::curvature_map;
use ridgeflow::synth::{gen_concentric, gen_parallel, SyntheticPattern};
use ridgeflow::{enhance, FilterKind, FusionConfig, GrayImage, OrientationField, PipelineConfig, RfConfig, WindowShape};

const SIZE: usize = 512;
const PERIOD: f64 = 10.0;
const MARGIN: usize = 40;
const CENTER: [f64; 2] = [255.5, 255.5];
const INNER_RADIUS: f64 = 40.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn parallel_oracle() -> SyntheticPattern {
    gen_parallel(SIZE, SIZE, PERIOD, 0.3, 100.0, 0.0, 0).unwrap()
}

fn concentric_oracle(noise: f64, seed: u64) -> SyntheticPattern {
    gen_concentric(SIZE, SIZE, PERIOD, CENTER, INNER_RADIUS, 100.0, noise, seed).unwrap()
}

fn radius(i: usize) -> f64 {
    let (x, y) = ((i % SIZE) as f64, (i / SIZE) as f64);
    (x - CENTER[0]).hypot(y - CENTER[1])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn worked_profile_arithmetic() -> Outcome {
    // Maxima at 2, 11, 14, 24 and minima at 6, 11, 17.
    let a = inter_extrema_distances(&[6, 11, 17], &[2, 11, 14, 24]);
    let sa = ied_statistics(&a).unwrap();
    // Regular profile with period 11: three gaps between maxima and minima each.
    let values: Vec<f64> = (0..45).map(|i| (TAU * i as f64 / 11.0).cos()).collect();
    let est = estimate_rf(&Profile1D::from_values(values).unwrap(), &RfConfig::default());
    let sb = ied_statistics(&inter_extrema_distances(&[], &[0, 11, 22, 33])).unwrap();
    let pass = a == [9.0, 3.0, 10.0, 5.0, 6.0]
        && sa.median == 6.0
        && sa.p_maxmin == 10.0 / 3.0
        && sb.median == 11.0
        && sb.p_maxmin == 1.0
        && est.median_ied == Some(11.0)
        && est.p_maxmin == Some(1.0)
        && est.freq == Some(1.0 / 11.0);
    outcome(
        pass,
        format!(
            "median {} p_maxmin {:.6}; median {} p_maxmin {} freq {:?}",
            sa.median, sa.p_maxmin, sb.median, sb.p_maxmin, est.freq
        ),
    )
}

fn kernel_oracle() -> Outcome {
    let brute = |t: f64, f: f64, sx: f64, sy: f64, x: f64, y: f64| {
        let xr = x * t.cos() + y * t.sin();
        let yr = y * t.cos() - x * t.sin();
        let envelope = (-(xr.powi(2) / sx.powi(2) + yr.powi(2) / sy.powi(2)) / 2.0).exp();
        envelope * (2.0 * PI * f * xr).cos()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for _ in 0..1000 {
        let t = rng.random_range(0.0..PI);
        let f = rng.random_range(1.0 / 25.0..1.0 / 3.0);
        let sx = rng.random_range(1.0..16.0);
        let sy = rng.random_range(1.0..32.0);
        let x = rng.random_range(-32.0..32.0);
        let y = rng.random_range(-32.0..32.0);
        worst = worst.max((gabor_kernel(t, f, sx, sy, x, y) - brute(t, f, sx, sy, x, y)).abs());
        exact &= gabor_kernel(t, f, sx, sy, 0.0, 0.0) == 1.0;
        exact &= gabor_kernel(t, f, sx, sy, x, y) == gabor_kernel(t, f, sx, sy, -x, -y);
    }
    outcome(
        worst <= 1e-12 && exact,
        format!("max deviation {worst:.3e}, center and point symmetry exact: {exact}"),
    )
}

fn parallel_oracle_run() -> Outcome {
    let pat = parallel_oracle();
    let cfg = PipelineConfig::default();
    let (norm, stages, _) = estimate_orientation(&pat.image, &cfg).unwrap();
    let of = stages.of;
    let (rf, _) = rf_image(&norm, &of, &cfg.region, &cfg.frequency, cfg.interpolation).unwrap();
    let curv = curvature_map(&norm, &of, &cfg.region, cfg.interpolation.orientation).unwrap();
    let interior = interior_mask(&pat.truth, MARGIN);
    let idx: Vec<usize> = (0..interior.len()).filter(|&i| interior[i]).collect();
    let of_err: Vec<f64> = idx
        .iter()
        .map(|&i| of.angles()[i].map_or(90.0, |a| angular_difference(a, 0.3 + PI / 2.0).to_degrees()))
        .collect();
    let rf_err: Vec<f64> = idx.iter().map(|&i| rf.values()[i].map_or(1.0, |f| (f - 0.1).abs() / 0.1)).collect();
    let curv_v: Vec<f64> = idx.iter().map(|&i| curv.values()[i].unwrap_or(PI)).collect();
    let of_mean = mean(&of_err);
    let rf_max = rf_err.iter().copied().fold(0.0, f64::max);
    let curv_mean = mean(&curv_v);
    outcome(
        of_mean < 1.0 && rf_max <= 0.02 && curv_mean < 0.02,
        format!("OF mean error {of_mean:.4} deg, RF max relative error {rf_max:.4}, curvature mean {curv_mean:.4} rad"),
    )
}

fn concentric_oracle_run() -> Outcome {
    let pat = concentric_oracle(0.0, 0);
    let cfg = PipelineConfig::default();
    let (norm, stages, _) = estimate_orientation(&pat.image, &cfg).unwrap();
    let of = stages.of;
    let (rf, _) = rf_image(&norm, &of, &cfg.region, &cfg.frequency, cfg.interpolation).unwrap();
    let (xsig, _) = rf_image_xsignature(&norm, &of, &cfg.frequency, cfg.interpolation.gray).unwrap();
    let curv = curvature_map(&norm, &of, &cfg.region, cfg.interpolation.orientation).unwrap();

    let interior = interior_mask(&pat.truth, MARGIN);
    let rf_max = (0..interior.len())
        .filter(|&i| interior[i])
        .map(|i| rf.values()[i].map_or(1.0, |f| (f - 0.1).abs() / 0.1))
        .fold(0.0, f64::max);

    let fg = pat.image.mask();
    let annulus: Vec<usize> = (0..fg.len()).filter(|&i| fg[i] && (40.0..=120.0).contains(&radius(i))).collect();
    let abs_err = |m: &ridgeflow::RidgeFrequencyMap| {
        let e: Vec<f64> = annulus.iter().map(|&i| m.values()[i].map_or(0.1, |f| (f - 0.1).abs())).collect();
        mean(&e)
    };
    let (curved_err, xsig_err) = (abs_err(&rf), abs_err(&xsig));

    let ring: Vec<f64> = (0..fg.len())
        .filter(|&i| (radius(i) - 100.0).abs() <= 0.5)
        .map(|i| curv.values()[i].unwrap_or(0.0))
        .collect();
    let ring_mean = mean(&ring);
    let ring_rel = (ring_mean - 0.64).abs() / 0.64;
    outcome(
        rf_max <= 0.03 && xsig_err > curved_err && ring_rel <= 0.10,
        format!(
            "RF max relative error {rf_max:.4}; annulus mean abs RF error curved {curved_err:.3e} vs x-signature {xsig_err:.3e}; curvature at r=100 {ring_mean:.4} rad ({:.1}% off)",
            100.0 * ring_rel
        ),
    )
}

/// Curved and straight outputs from one shared orientation and frequency estimate.
fn curved_and_straight(img: &GrayImage) -> (GrayImage, GrayImage) {
    let cfg = PipelineConfig::default();
    let (norm, OrientationStages { of, .. }, _) = estimate_orientation(img, &cfg).unwrap();
    let (rf, _) = rf_image(&norm, &of, &cfg.region, &cfg.frequency, cfg.interpolation).unwrap();
    let curved_params = cfg.gabor;
    assert_eq!(curved_params.filter, FilterKind::Curved);
    assert_eq!(curved_params.window, WindowShape::Full);
    assert_eq!((curved_params.sigma_x, curved_params.sigma_y, curved_params.p, curved_params.q), (4.0, 4.0, 16, 32));
    let (curved, _) = enhance_curved(
        &norm,
        &of,
        &rf,
        &curved_params,
        cfg.region.core_stop_threshold_deg,
        cfg.interpolation,
        &cfg.normalization,
    )
    .unwrap();
    let straight_params = ridgeflow::GaborParams {
        filter: FilterKind::Straight,
        ..curved_params
    };
    let (straight, _) = enhance_straight(&norm, &of, &rf, &straight_params, &cfg.normalization).unwrap();
    (curved, straight)
}

fn denoising() -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let pat = concentric_oracle(50.0, seed);
        let (curved, straight) = curved_and_straight(&pat.image);
        let interior = interior_mask(&pat.truth, MARGIN);
        let nc = normalized_cross_correlation(&curved, &pat.truth.clean, &interior).unwrap();
        let ns = normalized_cross_correlation(&straight, &pat.truth.clean, &interior).unwrap();
        wins += usize::from(nc > ns);
        lines.push(format!("seed {seed}: {nc:.4} vs {ns:.4}"));
    }
    outcome(wins == 5, format!("curved beats straight on {wins}/5 ({})", lines.join(", ")))
}

fn zero_curvature() -> Outcome {
    let pat = parallel_oracle();
    let (curved, straight) = curved_and_straight(&pat.image);
    let interior = interior_mask(&pat.truth, MARGIN);
    let diffs: Vec<f64> = (0..interior.len())
        .filter(|&i| interior[i])
        .map(|i| (curved.pixels()[i] - straight.pixels()[i]).abs())
        .collect();
    let mad = mean(&diffs);
    outcome(mad < 2.0, format!("mean absolute difference {mad:.4} gray levels"))
}

fn fusion_contract() -> Outcome {
    let (w, h) = (64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut a = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let t = rng.random_range(0.0..PI);
        let offset: f64 = 15.0 + rng.random_range(1e-6..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let u = (t + sign * offset.to_radians()).rem_euclid(PI);
        a.push((!rng.random_bool(0.05)).then_some(t));
        b.push((!rng.random_bool(0.05)).then_some(u));
    }
    let of1 = OrientationField::new(w, h, a.clone()).unwrap();
    let of2 = OrientationField::new(w, h, b.clone()).unwrap();
    let fused = fuse_orientation_fields(&of1, &of2, &FusionConfig::default()).unwrap();
    let reference: Vec<bool> = a
        .iter()
        .zip(&b)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => {
                let d = (a - b).abs().to_degrees() % 180.0;
                d.min(180.0 - d) < 15.0
            }
            _ => false,
        })
        .collect();
    let mismatches = (0..w * h).filter(|&i| fused.valid_mask()[i] != reference[i]).count();
    let accepted = reference.iter().filter(|&&v| v).count();

    // Single interior gap in a field of scattered orientations.
    let angles: Vec<Option<f64>> = (0..49)
        .map(|i| (i != 24).then(|| rng.random_range(0.1..0.9)))
        .collect();
    let of = OrientationField::new(7, 7, angles.clone()).unwrap();
    let filled = reconstruct_and_extrapolate(&of, 0);
    let (mut c, mut s) = (0.0, 0.0);
    for dy in [-1i64, 0, 1] {
        for dx in [-1i64, 0, 1] {
            if (dx, dy) != (0, 0) {
                let t = angles[((3 + dy) * 7 + 3 + dx) as usize].unwrap();
                c += (2.0 * t).cos();
                s += (2.0 * t).sin();
            }
        }
    }
    let expected = (0.5 * s.atan2(c)).rem_euclid(PI);
    let got = filled.get(3, 3);
    let untouched = (0..49).filter(|&i| i != 24).all(|i| filled.angles()[i] == angles[i]);
    outcome(
        mismatches == 0 && accepted > 0 && accepted < w * h && got == Some(expected) && untouched,
        format!("{mismatches} mask mismatches over {} pixels ({accepted} accepted); gap filled with {got:?}, neighbor average {expected}", w * h),
    )
}

fn normalization() -> Outcome {
    let pat = concentric_oracle(0.0, 0);
    // Brightness drifting across the image.
    let img = GrayImage::from_fn(SIZE, SIZE, |x, y| pat.image.get(x, y) - 40.0 + 0.16 * y as f64)
    .unwrap()
    .with_mask(pat.image.mask().to_vec())
    .unwrap();
    let out = normalize_local(&img, 127.5, 100.0, 16);
    let interior = interior_mask(&pat.truth, MARGIN);
    let fg = img.mask();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for y in 0..SIZE {
        for x in 0..SIZE {
            if !interior[y * SIZE + x] {
                continue;
            }
            let (mut sum, mut n) = (0.0, 0);
            for dy in -16i64..=16 {
                for dx in -16i64..=16 {
                    let (u, v) = (x as i64 + dx, y as i64 + dy);
                    if dx * dx + dy * dy > 256 || u < 0 || v < 0 || u >= SIZE as i64 || v >= SIZE as i64 {
                        continue;
                    }
                    let j = v as usize * SIZE + u as usize;
                    if fg[j] {
                        sum += out.pixels()[j];
                        n += 1;
                    }
                }
            }
            worst = worst.max((sum / n as f64 - 127.5).abs());
            checked += 1;
        }
    }
    outcome(worst <= 2.0, format!("max |local mean - 127.5| = {worst:.4} over {checked} pixels"))
}

fn determinism() -> Outcome {
    let pat = gen_concentric(192, 192, 9.0, [95.5, 95.5], 24.0, 80.0, 30.0, 11).unwrap();
    let cfg = PipelineConfig::default();
    let a = enhance(&pat.image, &cfg).unwrap();
    let b = enhance(&pat.image, &cfg).unwrap();
    let bits = |img: &GrayImage| img.pixels().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same = bits(&a.enhanced) == bits(&b.enhanced)
        && a.enhanced.mask() == b.enhanced.mask()
        && a.of == b.of
        && a.rf == b.rf
        && a.curvature == b.curvature;
    outcome(same, format!("enhanced image, OF, RF and curvature identical: {same}"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("ridge period arithmetic of the worked profiles", Duration::from_secs(1), worked_profile_arithmetic),
        ("Gabor kernel against brute force", Duration::from_secs(1), kernel_oracle),
        ("parallel oracle", Duration::from_secs(30), parallel_oracle_run),
        ("concentric oracle", Duration::from_secs(60), concentric_oracle_run),
        ("denoising, curved vs straight", Duration::from_secs(300), denoising),
        ("zero-curvature equivalence", Duration::from_secs(120), zero_curvature),
        ("fusion contract", Duration::from_secs(1), fusion_contract),
        ("local normalization", Duration::from_secs(30), normalization),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= limit;
        failed += usize::from(!pass);
        println!(
            "{} {name}: {} [{:.2} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
