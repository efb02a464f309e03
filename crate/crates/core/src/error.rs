use std::io;

use thiserror::Error;

/// Errors produced by the rate model, the tag emulator and the coincidence engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its physical domain. `field` is the dotted path
    /// of the offending value, e.g. `source.pump_power_mw`.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// A tag stream is not sorted by timestamp.
    #[error("tag stream `{stream}` is not time-ordered at event {index}")]
    Unsorted { stream: &'static str, index: u64 },

    /// There is no data to compute a statistic from (as opposed to a statistic
    /// that is legitimately zero).
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid tag file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Rejects NaN/inf and negative values.
pub(crate) fn check_non_negative(field: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(field, format!("must be finite, got {value}")));
    }
    if value < 0.0 {
        return Err(Error::invalid(field, format!("must be >= 0, got {value}")));
    }
    Ok(())
}

pub(crate) fn check_unit_interval(field: &str, value: f64) -> Result<()> {
    check_non_negative(field, value)?;
    if value > 1.0 {
        return Err(Error::invalid(field, format!("must be <= 1, got {value}")));
    }
    Ok(())
}
