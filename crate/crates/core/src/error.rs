use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// Master-equation integration lost trace beyond the allowed drift.
    #[error(
        "integration failure at t = {time:e} s: trace drift {drift:e} exceeds tolerance; \
         retry with step <= {suggested_step:e} s"
    )]
    IntegrationFailure {
        time: f64,
        drift: f64,
        suggested_step: f64,
    },

    /// A bounded iterative procedure did not converge.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Not enough samples for a posterior summary.
    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },

    /// Input data is empty or inconsistent.
    #[error("invalid data: {0}")]
    InvalidData(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
