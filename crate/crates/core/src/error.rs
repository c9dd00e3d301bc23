use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("transmitter coincides with element (row {row}, col {col})")]
    CoincidentTransmitter { row: usize, col: usize },

    #[error("received power is zero; log of zero is undefined")]
    DegeneratePower,

    #[error("exhaustive search over {configs} configurations exceeds the 2^24 guard")]
    InstanceTooLarge { configs: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(expected: &[usize], found: &[usize]) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}
