use std::io;

use thiserror::Error;

/// Errors produced by the embedding, tracking, evaluation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero vector cannot be normalized (norm {norm:e})")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector is not unit norm (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("antipodal pair: interpolation path undefined (cosine {cosine})")]
    AntipodalPair { cosine: f64 },

    #[error("empty list: {0}")]
    EmptyList(&'static str),

    #[error("need at least 2 identity means to build anchors, got {0}")]
    TooFewMeans(usize),

    #[error("anchor set is empty")]
    EmptyAnchorSet,

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("duplicate gallery label {0:?}")]
    DuplicateLabel(String),

    #[error("empty label at row {0}")]
    EmptyLabel(usize),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated input: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("label block has {found} lines, expected {expected}")]
    LabelCountMismatch { expected: usize, found: usize },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt tracker state: {0}")]
    CorruptState(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::IoFailure {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
