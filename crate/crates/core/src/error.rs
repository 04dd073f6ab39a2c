use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("duplicate participant id {0:?}")]
    DuplicateParticipant(String),
    #[error("unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("{path}: timestamps not monotone at row index {row}")]
    NonMonotone { path: PathBuf, row: usize },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    Arity {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
