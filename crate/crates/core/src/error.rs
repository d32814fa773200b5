use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape, non-scalar output, empty batch, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A value that must be finite was not.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Optimisation produced non-finite parameters.
    #[error("numerical divergence: {0}")]
    Divergence(String),
    /// Rejection ABC accepted nothing within the tolerance.
    #[error("no simulations accepted at tolerance {tolerance}; increase the tolerance or the budget")]
    NoAcceptances { tolerance: f64 },
    /// MCMC-ABC could not find an initial point within the tolerance.
    #[error("MCMC-ABC initialisation failed after {0} simulations")]
    InitFailed(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
