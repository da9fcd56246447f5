//! End-to-end enhancement and its configuration.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::{rf_image, rf_image_xsignature, RfConfig, RfMethod, RfStats, RidgeFrequencyMap};
use crate::gabor::{enhance_curved, enhance_straight, EnhanceStats, FilterKind, GaborParams};
use crate::image::{GrayImage, Interpolation, Normalization};
use crate::orientation::{
    estimate_gradient_of, fuse_orientation_fields, inner_gaps, reconstruct_and_extrapolate, FusionConfig,
    OrientationField,
};
use crate::region::{curvature_map, CurvatureMap, RegionConfig};

/// Every tunable of the pipeline. Serialized as TOML with one table per
/// section; missing keys take their defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub normalization: Normalization,
    pub fusion: FusionConfig,
    /// Curved regions used for frequency and curvature estimation.
    pub region: RegionConfig,
    pub frequency: RfConfig,
    pub gabor: GaborParams,
    pub interpolation: Interpolation,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.normalization.validate()?;
        self.fusion.validate()?;
        self.region.validate()?;
        self.frequency.validate()?;
        self.gabor.validate()
    }

    /// Default configuration with the named filter preset.
    pub fn with_preset(name: &str) -> Result<Self> {
        Ok(Self {
            gabor: GaborParams::preset(name)?,
            ..Self::default()
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Normalize,
    Orientation,
    Fusion,
    Reconstruction,
    Frequency,
    Curvature,
    Filter,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Self::Normalize,
        Self::Orientation,
        Self::Fusion,
        Self::Reconstruction,
        Self::Frequency,
        Self::Curvature,
        Self::Filter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Normalize => "normalize",
            Self::Orientation => "orientation",
            Self::Fusion => "fusion",
            Self::Reconstruction => "reconstruction",
            Self::Frequency => "frequency",
            Self::Curvature => "curvature",
            Self::Filter => "filter",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Wall time per stage, in pipeline order.
    pub timings: Vec<(Stage, Duration)>,
    pub foreground_pixels: usize,
    /// Pixels where the two orientation estimates agreed.
    pub fused_valid: usize,
    pub inner_gap_pixels: usize,
    /// Valid orientations after reconstruction and extrapolation.
    pub orientation_valid: usize,
    pub frequency: RfStats,
    pub filter: EnhanceStats,
}

impl Diagnostics {
    pub fn timing(&self, stage: Stage) -> Option<Duration> {
        self.timings.iter().find(|(s, _)| *s == stage).map(|(_, d)| *d)
    }

    pub fn total_time(&self) -> Duration {
        self.timings.iter().map(|(_, d)| *d).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementResult {
    pub enhanced: GrayImage,
    pub of: OrientationField,
    pub rf: RidgeFrequencyMap,
    pub curvature: CurvatureMap,
    pub diagnostics: Diagnostics,
}

/// Orientation field of an image: two gradient estimates at different
/// smoothing scales are fused, then gaps are reconstructed and the field is
/// extrapolated.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationStages {
    pub fine: OrientationField,
    pub coarse: OrientationField,
    pub fused: OrientationField,
    pub of: OrientationField,
}

fn timed<T>(diag: &mut Diagnostics, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage.name()));
    diag.timings.push((stage, start.elapsed()));
    out
}

fn orientation_stages(img: &GrayImage, cfg: &PipelineConfig, diag: &mut Diagnostics) -> Result<OrientationStages> {
    let (fine, coarse) = timed(diag, Stage::Orientation, || {
        Ok((
            estimate_gradient_of(img, cfg.fusion.smoothing_window),
            estimate_gradient_of(img, cfg.fusion.coarse_window),
        ))
    })?;
    let fused = timed(diag, Stage::Fusion, || fuse_orientation_fields(&fine, &coarse, &cfg.fusion))?;
    let of = timed(diag, Stage::Reconstruction, || {
        Ok(reconstruct_and_extrapolate(&fused, cfg.fusion.extrapolation_radius))
    })?;
    diag.fused_valid = fused.valid_count();
    diag.inner_gap_pixels = inner_gaps(&fused).iter().filter(|&&g| g).count();
    diag.orientation_valid = of.valid_count();
    Ok(OrientationStages { fine, coarse, fused, of })
}

fn normalized_input(img: &GrayImage, cfg: &PipelineConfig, diag: &mut Diagnostics) -> Result<GrayImage> {
    cfg.validate().map_err(|e| e.in_stage("configuration"))?;
    diag.foreground_pixels = img.foreground_count();
    timed(diag, Stage::Normalize, || Ok(cfg.normalization.global(img)))
}

/// Globally normalized image and its orientation stages.
pub fn estimate_orientation(img: &GrayImage, cfg: &PipelineConfig) -> Result<(GrayImage, OrientationStages, Diagnostics)> {
    let mut diag = Diagnostics::default();
    let norm = normalized_input(img, cfg, &mut diag)?;
    let stages = orientation_stages(&norm, cfg, &mut diag)?;
    Ok((norm, stages, diag))
}

fn frequency_stage(img: &GrayImage, of: &OrientationField, cfg: &PipelineConfig, diag: &mut Diagnostics) -> Result<RidgeFrequencyMap> {
    let (rf, stats) = timed(diag, Stage::Frequency, || match cfg.frequency.method {
        RfMethod::Curved => rf_image(img, of, &cfg.region, &cfg.frequency, cfg.interpolation),
        RfMethod::XSignature => rf_image_xsignature(img, of, &cfg.frequency, cfg.interpolation.gray),
    })?;
    diag.frequency = stats;
    Ok(rf)
}

/// Ridge frequency image, with the orientation stages it needs.
pub fn estimate_frequency(img: &GrayImage, cfg: &PipelineConfig) -> Result<(RidgeFrequencyMap, OrientationField, Diagnostics)> {
    let (norm, stages, mut diag) = estimate_orientation(img, cfg)?;
    let rf = frequency_stage(&norm, &stages.of, cfg, &mut diag)?;
    Ok((rf, stages.of, diag))
}

/// Curvature map, with the orientation field it was measured on.
pub fn estimate_curvature(img: &GrayImage, cfg: &PipelineConfig) -> Result<(CurvatureMap, OrientationField, Diagnostics)> {
    let (norm, stages, mut diag) = estimate_orientation(img, cfg)?;
    let c = timed(&mut diag, Stage::Curvature, || {
        curvature_map(&norm, &stages.of, &cfg.region, cfg.interpolation.orientation)
    })?;
    Ok((c, stages.of, diag))
}

/// Runs the full pipeline: global normalization, fused and reconstructed
/// orientation field, ridge frequency, curvature, Gabor filtering and local
/// normalization. Errors name the stage that failed.
pub fn enhance(img: &GrayImage, cfg: &PipelineConfig) -> Result<EnhancementResult> {
    let mut diag = Diagnostics::default();
    let norm = normalized_input(img, cfg, &mut diag)?;
    let of = orientation_stages(&norm, cfg, &mut diag)?.of;
    let rf = frequency_stage(&norm, &of, cfg, &mut diag)?;
    let curvature = timed(&mut diag, Stage::Curvature, || {
        curvature_map(&norm, &of, &cfg.region, cfg.interpolation.orientation)
    })?;
    let (enhanced, stats) = timed(&mut diag, Stage::Filter, || match cfg.gabor.filter {
        FilterKind::Curved => enhance_curved(
            &norm,
            &of,
            &rf,
            &cfg.gabor,
            cfg.region.core_stop_threshold_deg,
            cfg.interpolation,
            &cfg.normalization,
        ),
        FilterKind::Straight => enhance_straight(&norm, &of, &rf, &cfg.gabor, &cfg.normalization),
    })?;
    diag.filter = stats;
    Ok(EnhancementResult {
        enhanced,
        of,
        rf,
        curvature,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{interior_mask, normalized_cross_correlation};
    use crate::gabor::WindowShape;
    use crate::synth::gen_parallel;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = PipelineConfig::with_preset("smooth-33x65").unwrap();
        cfg.frequency.method = RfMethod::XSignature;
        cfg.gabor.window = WindowShape::Ellipse;
        cfg.interpolation.gray = crate::image::InterpolationMethod::Bicubic;
        let text = cfg.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn defaults_are_the_published_constants() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.fusion.angle_threshold_deg, 15.0);
        assert_eq!(cfg.fusion.extrapolation_radius, 16);
        assert_eq!(cfg.fusion.smoothing_window, 33);
        assert_eq!(cfg.frequency.p_maxmin_threshold, 1.5);
        assert_eq!(cfg.frequency.max_smoothing, 3);
        assert_eq!((cfg.frequency.smoothing_kernel_size, cfg.frequency.smoothing_sigma), (7, 1.0));
        assert_eq!(cfg.frequency.min_valid_fraction, 0.5);
        assert_eq!(cfg.frequency.smoothing_window, 49);
        assert_eq!((cfg.region.p, cfg.region.q), (16, 32));
        assert_eq!(cfg.normalization.target_mean, 127.5);
        assert_eq!(cfg.normalization.target_std, 100.0);
        assert_eq!(cfg.normalization.local_radius, 16);
        assert_eq!((cfg.gabor.sigma_x, cfg.gabor.sigma_y), (4.0, 4.0));
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(PipelineConfig::from_toml("[gabor]\nsigma_x = -1.0\n").is_err());
        assert!(PipelineConfig::from_toml("[gabor]\nunknown = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[frequency]\nmethod = \"fft\"\n").is_err());
        assert!(matches!(
            PipelineConfig::from_toml("nonsense"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn background_only_input_fails_in_the_frequency_stage() {
        let img = GrayImage::filled(48, 48, 0.0).unwrap().with_mask(vec![false; 48 * 48]).unwrap();
        let err = enhance(&img, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.stage(), Some("frequency"));
    }

    #[test]
    fn parallel_ridges_end_to_end() {
        let pat = gen_parallel(128, 128, 9.0, 0.5, 60.0, 20.0, 3).unwrap();
        let cfg = PipelineConfig::default();
        let res = enhance(&pat.image, &cfg).unwrap();
        assert_eq!(res.enhanced.dims(), (128, 128));
        assert_eq!(res.diagnostics.timings.len(), 7);
        let interior = interior_mask(&pat.truth, 24);
        let before = normalized_cross_correlation(&pat.image, &pat.truth.clean, &interior).unwrap();
        let after = normalized_cross_correlation(&res.enhanced, &pat.truth.clean, &interior).unwrap();
        assert!(after >= before, "{after} < {before}");
        let again = enhance(&pat.image, &cfg).unwrap();
        assert_eq!(again.enhanced, res.enhanced);
        assert_eq!(again.rf, res.rf);
    }
}
