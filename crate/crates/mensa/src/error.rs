//! Error taxonomy shared across the workspace.
//!
//! Callers map these onto process exit codes: configuration problems exit
//! with 1, runtime failures (I/O, malformed data, numeric blow-ups) with 2.

use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for data loading, training, and CLI plumbing.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: unknown key, unparsable value, or out-of-range field.
    #[error("config error: {0}")]
    Config(String),

    /// Shape or dimension mismatch between tensors or stored parameters.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss term or intermediate activation became non-finite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Dataset layout or file contents violated the expected format.
    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    /// Generated sample degenerated below the minimum usable size.
    #[error("generation error: {0}")]
    Generation(String),

    /// Checkpoint bytes were malformed, truncated, or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying filesystem failure with the offending path attached.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an I/O error with the path that produced it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wrap a data-format complaint with the file it came from.
    pub fn data(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Data { path: path.into(), reason: reason.into() }
    }

    /// Process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Workspace-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
