use std::path::PathBuf;

use unmix_core::UnmixError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Unmix(#[from] UnmixError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Failure inside a named file, with the underlying message.
    #[error("{}: {msg}", path.display())]
    File { path: PathBuf, msg: String },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("input {} changed since the manifest was written (sha256 {expected} != {actual})", path.display())]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("{failed} of {total} sweep cells failed")]
    SweepFailures { failed: usize, total: usize },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn file(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::File {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
