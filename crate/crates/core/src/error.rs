//! Crate-wide error type.
//!
//! Variants map onto the CLI's exit codes: configuration problems, data
//! problems and incomplete-run problems are distinguishable by the caller.

use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (bad bounds, malformed config file, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or unusable data (empty after cleaning, non-finite inputs, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A run directory is missing a required artifact.
    #[error("incomplete run: missing {artifact} in {dir}")]
    IncompleteRun { dir: PathBuf, artifact: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
