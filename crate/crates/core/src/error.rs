use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I - A is numerically singular: |det(I - A)| = {abs_det:e} < {tolerance:e}")]
    Singular { abs_det: f64, tolerance: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: row {row}, column {column}: missing value")]
    MissingValue { path: PathBuf, row: usize, column: String },

    #[error("{path}: row {row}, column {column}: cannot parse {cell:?} as a number")]
    NonNumeric { path: PathBuf, row: usize, column: String, cell: String },

    #[error("{path}: column {column} is constant and cannot be standardized")]
    ConstantColumn { path: PathBuf, column: String },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("empty group {0}")]
    EmptyGroup(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Coarse failure class, used by the command-line front end to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::MissingValue { .. }
            | Error::NonNumeric { .. }
            | Error::ConstantColumn { .. }
            | Error::Data { .. }
            | Error::EmptyGroup(_)
            | Error::Dimension(_)
            | Error::Format { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}
