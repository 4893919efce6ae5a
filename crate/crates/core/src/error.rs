use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The result is not representable as a finite `f64`.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Quadrature refinement exhausted its evaluation budget.
    #[error("quadrature did not converge after {evaluations} evaluations (last relative change {last_rel_change:e})")]
    NonConvergence { evaluations: usize, last_rel_change: f64 },

    /// An operation received an envelope of the wrong form.
    #[error("envelope form mismatch: expected {expected}, got {got}")]
    FormMismatch { expected: &'static str, got: &'static str },

    /// The least-squares design matrix is too ill-conditioned to trust.
    #[error("ill-conditioned fit: condition number {0:e}")]
    IllConditioned(f64),

    /// Not enough data points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A partition cell is too rare to be resolved by the requested trial count.
    #[error("degenerate partition: cell {cell} has estimated probability {probability:e} below {threshold:e}")]
    DegeneratePartition {
        cell: usize,
        probability: f64,
        threshold: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
