use thiserror::Error;

/// Errors raised by the library.
///
/// The variants split into two families that the CLI maps onto exit codes:
/// input problems (`Validation`, `Domain`, `BelowThreshold`, `Io`, `Parse`)
/// and numerical failures (`Pole`, `Numerical`, `CertificationFailed`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("below threshold: {0}")]
    BelowThreshold(String),

    #[error("evaluation point {z} is within {distance:e} of a pole at {pole}")]
    Pole { z: String, pole: f64, distance: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("root certification failed: {0}")]
    CertificationFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Pole { .. } | Error::Numerical(_) | Error::CertificationFailed(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
