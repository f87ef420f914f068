use thiserror::Error;

use crate::optim::KktPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A source term on the torus has nonzero mean, so the periodic Poisson
    /// problem has no solution.
    #[error("non-neutral source: mean {mean:e} exceeds tolerance {tolerance:e}")]
    NonNeutralSource { mean: f64, tolerance: f64 },

    /// A logarithm or reciprocal was requested of a non-positive value.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("no convergence in {context} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
        /// Last iterate of an optimizer, when one is available.
        partial: Option<Box<KktPoint>>,
    },

    /// `L + c` became non-positive inside AEPG.
    #[error("AEPG shift violation: L + c = {0:e} is not positive")]
    ShiftViolation(f64),

    #[error("singular saddle-point system: {0}")]
    SingularSystem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn no_convergence(context: &'static str, iterations: usize, residual: f64) -> Self {
        Error::NoConvergence {
            context,
            iterations,
            residual,
            partial: None,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
