use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimensions must be nonzero (got {width}x{height})")]
    EmptyImage { width: usize, height: usize },

    #[error("buffer has {found} entries, expected {expected}")]
    BufferSize { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region center ({x:.2}, {y:.2}) has no valid orientation")]
    CenterOutsideField { x: f64, y: f64 },

    #[error("no valid ridge frequency estimate in the foreground")]
    NoRidgeFrequency,

    #[error("foreground pixel ({x}, {y}) has no ridge frequency")]
    MissingFrequency { x: usize, y: usize },

    #[error("malformed {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("png decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage name of a pipeline error, if it carries one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            Error::File { source, .. } => source.stage(),
            _ => None,
        }
    }

    /// Attaches the file the error concerns.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
