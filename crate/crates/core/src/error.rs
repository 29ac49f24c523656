//! Error type shared by every module in the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("validation: {0}")]
    Validation(String),

    #[error("dimension mismatch in {place}: expected {expected}, got {got}")]
    DimMismatch {
        place: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("history is empty")]
    EmptyHistory,

    #[error("forecast table has no entries")]
    EmptyTable,

    /// A backward pass was handed a cache that does not match the module it
    /// was produced by.
    #[error("stale cache: {0}")]
    StaleCache(&'static str),

    #[error("state diverged at step {step}")]
    Diverged { step: usize },

    #[error("training loss is not finite in phase {phase}, epoch {epoch}, trajectory {trajectory}")]
    LossNotFinite {
        phase: &'static str,
        epoch: usize,
        trajectory: usize,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI's one-line
    /// diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::DimMismatch { .. } => "dim-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::EmptyHistory => "empty-history",
            Error::EmptyTable => "empty-table",
            Error::StaleCache(_) => "stale-cache",
            Error::Diverged { .. } => "diverged",
            Error::LossNotFinite { .. } => "loss-not-finite",
            Error::Format(_) => "format",
            Error::Version(_) => "version",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// True for errors caused by bad user input rather than a failure while
    /// running. The CLI maps these to exit code 1, the rest to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::DimMismatch { .. }
                | Error::Format(_)
                | Error::Version(_)
                | Error::Config(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
