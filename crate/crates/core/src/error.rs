use thiserror::Error;

/// Errors produced anywhere in the search pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    /// The sampler assigns (numerically) zero weight to every instance.
    #[error("degenerate sampler: total weight {0:e} is below 1e-12")]
    DegenerateSampler(f64),

    /// Gradient norms sum to zero, so no cumulative-gradient transform exists.
    #[error("all gradient norms are zero; cumulative gradient transform undefined")]
    ZeroGradientMass,

    #[error("kernel matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,

    #[error("need at least {needed} candidates, found {found}")]
    InsufficientCandidates { needed: usize, found: usize },

    #[error("rank correlation undefined for constant input")]
    ConstantInput,

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(path: &std::path::Path, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }
}
