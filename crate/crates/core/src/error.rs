use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("specification failed validation: {0}")]
    Invalid(ValidationReport),

    #[error("singular covariance in block `{block}` (pivot ratio {ratio:e})")]
    Singular { block: &'static str, ratio: f64 },

    #[error("drift evaluation failed on path {path} at step {step} (value {value})")]
    DriftFailure {
        path: usize,
        step: usize,
        value: f64,
    },

    #[error(
        "posterior degenerate: all importance weights vanish (max log-weight {max_log_weight})"
    )]
    PosteriorDegenerate { max_log_weight: f64 },

    #[error("grid captures mass {mass:.12}, below 1 - 1e-8")]
    GridCoverage { mass: f64 },

    #[error("grid rejected: {0}")]
    GridTooSmall(String),

    #[error("non-finite function value {value} at abscissa {x}")]
    NonFinite { x: f64, value: f64 },

    #[error(
        "Picard iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    PicardNotConverged { iterations: usize, residual: f64 },

    #[error("identity {identity} does not apply: {reason}")]
    Mismatch { identity: String, reason: String },

    #[error("unknown drift `{0}`")]
    UnknownDrift(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
