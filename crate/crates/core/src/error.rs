use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated a precondition (parameter range, sign, size).
    #[error("domain error: {0}")]
    Domain(String),
    /// Evaluation at or too close to a kernel singularity.
    #[error("singularity: {0}")]
    Singularity(String),
    /// An iteration stopped before reaching its tolerance.
    #[error("no convergence: {message} (residual {residual:e})")]
    NonConvergence {
        message: String,
        residual: f64,
        /// Best iterate seen, flattened, when the caller can use it.
        best: Option<Vec<f64>>,
    },
    /// Adaptive quadrature could not meet its tolerance.
    #[error("quadrature failure: {0}")]
    Quadrature(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::Singularity(msg.into())
    }

    pub(crate) fn no_convergence(msg: impl Into<String>, residual: f64) -> Self {
        Error::NonConvergence {
            message: msg.into(),
            residual,
            best: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
