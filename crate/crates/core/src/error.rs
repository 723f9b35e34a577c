use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Configuration problems are detected before any simulation starts; an
/// infinite model-risk premium is not an error and is reported as a value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate sample range")]
    DegenerateRange,

    #[error("degenerate booking sample")]
    DegenerateBooking,

    #[error("sample {value} outside bucket range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("non-positive state price {price} in bucket {bucket}")]
    NonPositivePrice { bucket: usize, price: f64 },

    #[error("histograms are defined on different bucket schemes")]
    SchemeMismatch,

    #[error("simulation failed: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
