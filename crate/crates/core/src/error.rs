use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vector {index} is not a unit vector (norm {norm})")]
    Normalization { index: usize, norm: f64 },

    #[error("guessed value {guess} exceeds the true bound; no assignment attains it")]
    GuessDominated { guess: i64 },

    #[error("no violation: the witness has no detection-efficiency advantage (ratio {ratio})")]
    NoViolation { ratio: f64 },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
