use std::path::PathBuf;

/// Errors raised by the odometry library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what} needs at least {needed} samples, got {got}")]
    InsufficientSamples {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("timestamps are not sorted at index {index}")]
    Unsorted { index: usize },

    #[error("timestamp {t:.6} outside the span [{start:.6}, {end:.6}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("point ({x:.3}, {y:.3}, {z:.3}) lies outside the local map cube")]
    OutsideLocalMap { x: f64, y: f64, z: f64 },

    #[error("matrix could not be inverted: {0}")]
    Singular(&'static str),

    #[error("smoothing window is empty")]
    EmptyWindow,

    #[error("smoother node {index} has no transition chain to its successor")]
    MissingTransitions { index: usize },

    #[error("trajectory evaluation failed: {0}")]
    Evaluation(String),

    #[error("tracking lost at t = {time:.3}s after {consecutive} sub-frames without matches")]
    TrackingFailure { time: f64, consecutive: usize },

    #[error("malformed input {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
