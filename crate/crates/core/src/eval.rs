//! Quantitative comparison of estimates against synthetic ground truth.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::erode;
use crate::image::GrayImage;
use crate::orientation::{angular_difference, OrientationField};
use crate::frequency::RidgeFrequencyMap;
use crate::region::CurvatureMap;
use crate::synth::GroundTruth;

/// Default margin excluded from metrics, wide enough for 33x65 regions.
pub const DEFAULT_BORDER_MARGIN: usize = 40;

/// Estimates to score; any subset may be supplied.
#[derive(Debug, Default, Clone, Copy)]
pub struct Estimates<'a> {
    pub of: Option<&'a OrientationField>,
    pub rf: Option<&'a RidgeFrequencyMap>,
    pub curvature: Option<&'a CurvatureMap>,
    pub enhanced: Option<&'a GrayImage>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub border_margin: usize,
    pub interior_pixels: usize,
    pub of_pixels: usize,
    pub of_mean_error_deg: Option<f64>,
    pub of_p95_error_deg: Option<f64>,
    pub rf_pixels: usize,
    pub rf_mean_relative_error: Option<f64>,
    pub curvature_pixels: usize,
    pub curvature_mae: Option<f64>,
    pub enhanced_ncc: Option<f64>,
}

impl fmt::Display for MetricReport {
    /// `key: value` lines in a fixed order; absent metrics print `none`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
        writeln!(f, "border_margin: {}", self.border_margin)?;
        writeln!(f, "interior_pixels: {}", self.interior_pixels)?;
        writeln!(f, "of_pixels: {}", self.of_pixels)?;
        writeln!(f, "of_mean_error_deg: {}", opt(self.of_mean_error_deg))?;
        writeln!(f, "of_p95_error_deg: {}", opt(self.of_p95_error_deg))?;
        writeln!(f, "rf_pixels: {}", self.rf_pixels)?;
        writeln!(f, "rf_mean_relative_error: {}", opt(self.rf_mean_relative_error))?;
        writeln!(f, "curvature_pixels: {}", self.curvature_pixels)?;
        writeln!(f, "curvature_mae: {}", opt(self.curvature_mae))?;
        writeln!(f, "enhanced_ncc: {}", opt(self.enhanced_ncc))
    }
}

fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[f64], pct: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Normalized cross-correlation of two images over the selected pixels.
pub fn normalized_cross_correlation(a: &GrayImage, b: &GrayImage, select: &[bool]) -> Option<f64> {
    let idx: Vec<usize> = (0..select.len()).filter(|&i| select[i]).collect();
    if idx.is_empty() {
        return None;
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| a.pixels()[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| b.pixels()[i]).sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (da, db) = (a.pixels()[i] - ma, b.pixels()[i] - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Interior of the truth foreground after eroding by `margin`.
pub fn interior_mask(truth: &GroundTruth, margin: usize) -> Vec<bool> {
    let (w, h) = truth.clean.dims();
    erode(w, h, truth.clean.mask(), margin)
}

/// Scores estimates over the margin-eroded truth foreground.
pub fn evaluate(est: &Estimates<'_>, truth: &GroundTruth, border_margin: usize) -> Result<MetricReport> {
    let dims = truth.clean.dims();
    let interior = interior_mask(truth, border_margin);
    let mut report = MetricReport {
        border_margin,
        interior_pixels: interior.iter().filter(|&&m| m).count(),
        ..Default::default()
    };

    if let Some(of) = est.of {
        check_dims(dims, of.dims())?;
        let errors: Vec<f64> = (0..interior.len())
            .filter(|&i| interior[i])
            .filter_map(|i| Some(angular_difference(of.angles()[i]?, truth.of.angles()[i]?).to_degrees()))
            .collect();
        report.of_pixels = errors.len();
        report.of_mean_error_deg = mean(&errors);
        report.of_p95_error_deg = percentile(&errors, 95.0);
    }
    if let Some(rf) = est.rf {
        check_dims(dims, rf.dims())?;
        let errors: Vec<f64> = (0..interior.len())
            .filter(|&i| interior[i])
            .filter_map(|i| {
                let (e, t) = (rf.values()[i]?, truth.rf.values()[i]?);
                Some((e - t).abs() / t)
            })
            .collect();
        report.rf_pixels = errors.len();
        report.rf_mean_relative_error = mean(&errors);
    }
    if let Some(curv) = est.curvature {
        check_dims(dims, curv.dims())?;
        let errors: Vec<f64> = (0..interior.len())
            .filter(|&i| interior[i])
            .filter_map(|i| Some((curv.values()[i]? - truth.curvature.values()[i]?).abs()))
            .collect();
        report.curvature_pixels = errors.len();
        report.curvature_mae = mean(&errors);
    }
    if let Some(enhanced) = est.enhanced {
        check_dims(dims, enhanced.dims())?;
        report.enhanced_ncc = normalized_cross_correlation(enhanced, &truth.clean, &interior);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_concentric, gen_parallel};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn truth_scores_perfectly() {
        let p = gen_concentric(160, 160, 10.0, [80.0, 80.0], 20.0, 100.0, 0.0, 0).unwrap();
        let t = &p.truth;
        let est = Estimates {
            of: Some(&t.of),
            rf: Some(&t.rf),
            curvature: Some(&t.curvature),
            enhanced: Some(&t.clean),
        };
        let r = evaluate(&est, t, 10).unwrap();
        assert!(r.interior_pixels > 0 && r.of_pixels == r.interior_pixels);
        assert_eq!(r.of_mean_error_deg, Some(0.0));
        assert_eq!(r.of_p95_error_deg, Some(0.0));
        assert_eq!(r.rf_mean_relative_error, Some(0.0));
        assert_eq!(r.curvature_mae, Some(0.0));
        assert!((r.enhanced_ncc.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_estimate_scores_ninety_degrees() {
        let p = gen_parallel(64, 64, 8.0, 0.0, 100.0, 0.0, 0).unwrap();
        let wrong = OrientationField::uniform(64, 64, 0.0).unwrap();
        assert_eq!(p.truth.of.get(0, 0), Some(FRAC_PI_2));
        let est = Estimates { of: Some(&wrong), ..Default::default() };
        let r = evaluate(&est, &p.truth, 5).unwrap();
        assert!((r.of_mean_error_deg.unwrap() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = gen_parallel(64, 64, 8.0, 0.0, 100.0, 0.0, 0).unwrap();
        let small = OrientationField::uniform(32, 64, 0.0).unwrap();
        let est = Estimates { of: Some(&small), ..Default::default() };
        assert!(evaluate(&est, &p.truth, 0).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), Some(19.0));
        assert_eq!(percentile(&v, 100.0), Some(20.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn report_format_is_stable() {
        let text = MetricReport::default().to_string();
        let keys: Vec<&str> = text.lines().map(|l| l.split(':').next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "border_margin",
                "interior_pixels",
                "of_pixels",
                "of_mean_error_deg",
                "of_p95_error_deg",
                "rf_pixels",
                "rf_mean_relative_error",
                "curvature_pixels",
                "curvature_mae",
                "enhanced_ncc"
            ]
        );
    }
}
