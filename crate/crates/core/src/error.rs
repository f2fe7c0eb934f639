use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("EmptyMask: mask has no foreground pixels")]
    EmptyMask,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid rectangle ({x0},{y0},{x1},{y1})")]
    InvalidRect { x0: i64, y0: i64, x1: i64, y1: i64 },

    #[error("BadRLE: {0}")]
    BadRle(String),

    #[error("EmptyPool: proposal pool has no segments")]
    EmptyPool,

    #[error("NoSupervisedPixels: every target pixel is IGNORE")]
    NoSupervisedPixels,

    #[error("DivergedGradient: non-finite value in gradients or loss")]
    DivergedGradient,

    #[error("Unsupervised: sample {0} has neither a ground-truth mask nor boxes")]
    Unsupervised(String),

    #[error("BoxOutOfBounds: box ({x0},{y0},{x1},{y1}) outside {width}x{height} image")]
    BoxOutOfBounds {
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
        width: usize,
        height: usize,
    },

    #[error("LabelOutOfRange: label {label} not below {num_classes} and not IGNORE")]
    LabelOutOfRange { label: u8, num_classes: usize },

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
