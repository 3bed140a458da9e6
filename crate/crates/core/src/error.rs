use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameter or configuration value.
    #[error("invalid `{field}`: {message}")]
    Config { field: String, message: String },

    /// A numerical procedure failed to meet its tolerance.
    #[error("numeric error: {message}")]
    Numeric { message: String, residual: Option<f64> },

    /// The moment hierarchy only closes for a constant burst rate.
    #[error("moment closure unsupported for a state-dependent burst rate; use Monte Carlo estimation")]
    UnsupportedClosure,

    /// The operation is not available for this model variant.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Thinning exceeded its proposal budget without accepting a jump.
    #[error("thinning safety cap reached after {proposals} proposals at t = {time}")]
    SafetyCap { proposals: u64, time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate histogram: all {count} samples lie above y_max = {y_max}")]
    DegenerateHistogram { count: usize, y_max: f64 },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            message: message.into(),
            residual: None,
        }
    }
}

pub(crate) fn ensure_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be positive and finite, got {value}"),
        ))
    }
}
