use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A group required by a metric or estimator has no qualifying rows.
    #[error("group {group} is empty: {what}")]
    EmptyGroup { group: u8, what: &'static str },

    #[error("non-finite value at step {step}: {what}")]
    Numeric { step: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Ingest {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
