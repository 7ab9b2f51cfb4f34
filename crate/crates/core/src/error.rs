//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data; carries a 1-based line number when the source is
    /// a line-oriented file.
    #[error("validation error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Requested backend or feature cannot be provided in this environment.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("model load error: {0}")]
    Load(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Classifier probe failure, annotated with the batch index that failed.
    #[error("probe failure at batch {batch_index}: {message}")]
    Probe { batch_index: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn validation(line: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Validation { line: line.into(), message: message.into() }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Argument(_) | Error::EmptyInput(_)
        )
    }
}
