use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid exponent p = {0}; the ground cost requires p >= 1")]
    InvalidExponent(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Gibbs kernel is not finite: lambda * max(C) = {magnitude}")]
    NonFiniteKernel { magnitude: f64 },

    #[error("instance too large for the exact LP oracle ({n} x {m} > 64 cells); use sinkhorn instead")]
    InstanceTooLarge { n: usize, m: usize },

    #[error("invalid parameters for {family}: {constraint}")]
    InvalidParams { family: &'static str, constraint: String },

    #[error("family {0} is evaluation-only and cannot enter a training corpus")]
    EvalOnlyFamily(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("loss must be a scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("zero variance in {0}; correlation undefined")]
    ZeroVariance(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
