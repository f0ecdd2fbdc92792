use thiserror::Error;

/// Errors produced by the sampling, path and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("unsupported dimension {0}: need d >= 2")]
    UnsupportedDimension(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid visit order: {0}")]
    InvalidOrder(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("instance too large: n = {n} exceeds the exact-solver cap of {cap}")]
    InstanceTooLarge { n: usize, cap: usize },
    #[error("degenerate curve: need at least 2 vertices, got {0}")]
    DegenerateCurve(usize),
    #[error("curve has zero total length")]
    ZeroLength,
    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("infeasible request: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mask calibration failed: {0}")]
    Calibration(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
