use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("truncated normal sampler exhausted {0} retries; bounds are pathological")]
    SamplerExhausted(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("GP hyperparameter fit failed: every restart hit a Cholesky failure")]
    FitFailed,

    #[error("analytic kernel expectation requires Gaussian (or zero) input noise")]
    AnalyticUnsupported,

    #[error(
        "unknown problem `{0}` (expected one of vlmop2, sinlinforrester, mdtp2, mdtp3, braningmm)"
    )]
    UnknownProblem(String),

    #[error("empty point set")]
    EmptySet,

    #[error("objective {0} of the reference front has zero range")]
    ZeroRange(usize),

    #[error("missing reference front `{0}`; generate one with `rmobo reference-front`")]
    MissingReference(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
