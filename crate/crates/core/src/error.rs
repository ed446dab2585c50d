use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("WDM band of {required_hz:.4e} Hz exceeds the sample rate {sample_rate_hz:.4e} Hz")]
    BandOverflow { required_hz: f64, sample_rate_hz: f64 },

    #[error("link mismatch: {0}")]
    LinkMismatch(String),

    #[error("non-finite field in span {span} at step {step}")]
    NonFinite { span: usize, step: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("target BER {target:.3e} is below the pre-loading BER {current:.3e}")]
    UnreachableBer { target: f64, current: f64 },

    #[error("decode error at byte offset {offset}: {reason}")]
    Decode { offset: u64, reason: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad classes used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) | Error::BandOverflow { .. } | Error::LinkMismatch(_) => {
                ErrorClass::Config
            }
            Error::NonFinite { .. } | Error::Numeric(_) | Error::UnreachableBer { .. } => {
                ErrorClass::Numeric
            }
            Error::Decode { .. } | Error::File { .. } | Error::Io(_) | Error::Json(_) => {
                ErrorClass::Io
            }
        }
    }
}
