use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the readout pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("trace has {len} samples, shorter than the {window}-sample window")]
    TraceTooShort { len: usize, window: usize },

    #[error("trace geometry cannot supply {needed} echo-free windows")]
    InsufficientNoiseRegions { needed: usize },

    #[error("echo maximum at sample {index} is within {half_width} samples of the trace edge (len {len})")]
    EchoAtEdge { index: usize, half_width: usize, len: usize },

    #[error("no echo above {threshold} (envelope peak {peak})")]
    NoEcho { threshold: f64, peak: f64 },

    #[error("post-selection window {window} holds {points} points, need at least 2")]
    SparseWindow { window: usize, points: usize },

    #[error("non-finite loss at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("network head is {found}, expected {expected}")]
    WrongHead { expected: &'static str, found: &'static str },

    #[error("missing trace for sequence j={0}")]
    MissingSequence(u8),

    #[error("sweep has {0} points, need at least 8")]
    SweepTooShort(usize),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
