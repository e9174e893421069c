use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its admissible range.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// An operation was called outside the domain where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no root in bracket [{lo:.3e}, {hi:.3e}]: {reason}")]
    NoRoot { lo: f64, hi: f64, reason: String },

    #[error("simulation did not settle within {periods} fundamental periods")]
    NotSettled { periods: usize },

    #[error("simulation diverged at t = {t:.6e} s: module {module} reached {voltage:.3e} V")]
    Diverged { t: f64, module: usize, voltage: f64 },

    #[error("waveform spans {periods:.6} fundamental periods; an integer span is required")]
    NonIntegerPeriods { periods: f64 },

    #[error("fundamental amplitude is zero; distortion ratio is undefined")]
    ZeroFundamental,

    #[error("no energy was delivered to the load; efficiency is undefined")]
    ZeroDelivered,

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
