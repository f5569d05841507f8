use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Rank correlation is undefined when one of the inputs has no rank variance.
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate importance weights: {0}")]
    DegenerateWeights(String),

    /// Input does not admit the requested estimate (e.g. all rows identical).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("bandwidth selection failed: {0}")]
    Selection(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
