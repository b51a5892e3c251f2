use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or option is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was called with inputs that violate its contract
    /// (dimension mismatch, out-of-range index, wrong branch).
    #[error("usage error: {0}")]
    Usage(String),

    /// A deterministic invariant failed during an audited run.
    #[error("audit violation (seed {seed}): {invariant}")]
    Audit { seed: u64, invariant: String },

    /// A persisted instance does not match its regenerated contents.
    #[error("instance verification failed: {0}")]
    Verification(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for the command-line tool: 2 for audit
    /// violations, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Audit { .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(usage(format!("{what}: expected dimension {expected}, got {got}")))
    }
}
