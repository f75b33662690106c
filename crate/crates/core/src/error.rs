use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model specification failed validation.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A population count left the 64-bit range.
    #[error("population count saturated at step {step}")]
    Saturation { step: u64 },

    /// The stationarity hypothesis `E[log J] < 0` does not hold.
    #[error("non-negative drift E[log J] = {drift:.6e}; stationary sampling refused (use force to override)")]
    NonNegativeDrift { drift: f64 },

    /// A cycle ran past its step cap, usually because the drift is near zero.
    #[error("cycle exceeded the cap of {cap} steps")]
    CycleCap { cap: u64 },

    /// A moment or integral diverges at the requested argument.
    #[error("domain error: {0}")]
    Domain(String),

    /// `Psi` never becomes positive: the tail is lighter than any power law.
    #[error("no positive root of Psi: tail is lighter than any power law")]
    NoPositiveRoot,

    /// Inputs are degenerate for the requested estimator.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    /// Stamp a saturation error with the step at which it happened.
    pub fn at_step(self, step: u64) -> Self {
        match self {
            Error::Saturation { .. } => Error::Saturation { step },
            other => other,
        }
    }
}
