use thiserror::Error;

/// Errors raised by the diffusion engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpirError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("timestep {t} out of range {lo}..={hi}")]
    TimestepOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("invalid merge: k = {k} with t = {t} (need 1 <= k <= t)")]
    InvalidMerge { t: usize, k: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("ddim parametrization error: 1 - alpha_bar(t_next) - sigma^2 = {0} < 0")]
    DdimParametrization(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("world violates preconditions: {0}")]
    WorldPrecondition(String),

    #[error("estimator configuration: {0}")]
    Estimator(String),

    #[error("sampler configuration: {0}")]
    Sampler(String),
}

pub type Result<T> = std::result::Result<T, DpirError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(DpirError::DimensionMismatch { expected, got })
    }
}
