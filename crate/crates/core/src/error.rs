use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong vector length, macro switched off, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty state: at least one UE position is required")]
    EmptyState,

    #[error("empty point set")]
    EmptySet,

    /// Scenario/config validation failure; `path` is the dotted path of the offending field.
    #[error("invalid value at `{path}`: {reason}")]
    Validation { path: String, reason: String },

    #[error("{path}: I/O error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format version {found} (this build reads up to version {supported})")]
    Version { found: u32, supported: u32 },

    /// Truncated or malformed persisted data.
    #[error("corrupt data at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },

    /// Persisted data parsed cleanly but breaks a structural invariant.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Version { .. } | Error::Contract(_) | Error::EmptyState
        )
    }
}
