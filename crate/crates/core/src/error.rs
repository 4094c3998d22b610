use thiserror::Error;

/// Errors raised by the aggregation and accounting primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector must have at least one entry")]
    EmptyVector,

    #[error("vector entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("probability vector is invalid: {0}")]
    NotOnSimplex(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("subsampling bound overflows at order {alpha}")]
    AmplificationOverflow { alpha: u32 },

    #[error("no Rényi order in the grid produced a finite bound")]
    NoValidOrder,

    #[error(
        "unachievable budget: target epsilon {target} outside [{at_high_noise}, {at_low_noise}] \
         reached at sigma1 = {sigma_high} and sigma1 = {sigma_low}"
    )]
    UnachievableBudget {
        target: f64,
        at_low_noise: f64,
        at_high_noise: f64,
        sigma_low: f64,
        sigma_high: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
