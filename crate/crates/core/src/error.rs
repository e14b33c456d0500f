use std::path::PathBuf;

use thiserror::Error;

use crate::evaluators::EvalError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid bit configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("KL divergence undefined: p[{index}] > 0 but q[{index}] = 0")]
    UndefinedDivergence { index: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("need at least {needed} distinct samples to fit, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("surrogate fit failed: {0}")]
    Fit(String),

    #[error("{context}: {source}")]
    Evaluation {
        context: String,
        #[source]
        source: EvalError,
    },

    #[error(
        "no archived configuration within ±{tolerance} of {target} bits{}",
        nearest.map(|b| format!(" (nearest available: {b:.4})")).unwrap_or_default()
    )]
    NotFound {
        target: f64,
        tolerance: f64,
        nearest: Option<f64>,
    },

    #[error("target {target} bits is unreachable (achievable range [{min}, {max}])")]
    Unreachable { target: f64, min: f64, max: f64 },

    #[error("space has {size} configurations, exceeding the enumeration cap of {cap}")]
    SpaceTooLarge { size: String, cap: u64 },

    #[error("hypervolume: {0}")]
    Hypervolume(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn eval(context: impl Into<String>, source: EvalError) -> Self {
        Error::Evaluation {
            context: context.into(),
            source,
        }
    }
}
