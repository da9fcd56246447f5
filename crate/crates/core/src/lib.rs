//! Enhancement of curved oriented textures such as fingerprints.
//!
//! The pipeline estimates an orientation field by fusing two gradient-based
//! estimates, follows the flow with curved regions to estimate ridge frequency
//! and curvature, and filters every pixel with a Gabor filter laid out along
//! its curved region. Synthetic ridge patterns with analytic ground truth are
//! included for evaluation.

pub mod batch;
pub mod error;
pub mod eval;
pub mod frequency;
pub mod gabor;
mod grid;
pub mod image;
pub mod io;
pub mod orientation;
pub mod pipeline;
pub mod profile;
pub mod region;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
pub use frequency::{RfConfig, RfEstimate, RfMethod, RidgeFrequencyMap};
pub use gabor::{FilterKind, GaborParams, WindowShape};
pub use image::{GrayImage, Interpolation, InterpolationMethod, Normalization};
pub use orientation::{FusionConfig, OrientationField};
pub use region::{CurvatureMap, CurvedRegion, RegionConfig};
pub use pipeline::{enhance, EnhancementResult, PipelineConfig};
