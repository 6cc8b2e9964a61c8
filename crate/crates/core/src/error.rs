use thiserror::Error;

/// Errors raised by the numerical machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not available for this weight / root system.
    #[error("unsupported configuration: {0}")]
    Capability(String),

    /// A construction could not meet its tolerance.
    #[error("infeasible: {message} (residual {residual:e})")]
    Infeasible { message: String, residual: f64 },

    /// A hypothesis required by a reduction does not hold for the input.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// A configuration invariant is violated.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A linear-algebra step broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
