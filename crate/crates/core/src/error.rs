use thiserror::Error;

use crate::pricing_series::SeriesOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input violated its domain. `name` is the parameter or field path.
    #[error("{name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// Seasonal gas level was not strictly positive somewhere on the horizon.
    #[error("seasonal level must be positive, got {value} at t = {time}")]
    NonPositiveLevel { time: f64, value: f64 },

    /// Linear reduction produced an underlying that cannot be lognormal.
    #[error("effective underlying must be positive, got {0}")]
    NonPositiveUnderlying(f64),

    #[error("non-finite intermediate value in {0}")]
    NonFinite(&'static str),

    /// Configuration did not parse or validate. `path` locates the offending field.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    /// Binary or CSV path data could not be decoded.
    #[error("malformed path data: {0}")]
    Format(String),

    /// The series controller ran out of budget. The partial sum and tail bound are attached.
    #[error(
        "series did not converge after {} diagonals (partial price {}, tail bound {:e})",
        .0.report.final_diagonal + 1,
        .0.price,
        .0.report.tail_price_bound
    )]
    NotConverged(Box<SeriesOutcome>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::NonPositiveLevel { .. }
                | Error::NonPositiveUnderlying(_)
                | Error::Config { .. }
                | Error::Format(_)
        )
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}

pub(crate) fn ensure_correlation(name: &str, rho: f64) -> Result<()> {
    if rho.is_finite() && (-1.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [-1, 1], got {rho}")))
    }
}
