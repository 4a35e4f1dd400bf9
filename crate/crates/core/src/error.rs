use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("no connected Erdos-Renyi graph after {0} draws")]
    RetriesExhausted(usize),

    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("chain is reducible: irreducibility FAIL")]
    Reducible,

    #[error("chain is periodic with period {0}: aperiodicity FAIL")]
    Periodic(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("iteration {k}: {source}")]
    AtIteration { k: usize, source: Box<Error> },

    #[error("config: {0}")]
    Config(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, k: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration { k, source: Box::new(e) },
        }
    }

    /// True for errors that report a violated mathematical property of an
    /// input (as opposed to malformed usage or I/O).
    pub fn is_validation_failure(&self) -> bool {
        match self {
            Error::Disconnected
            | Error::RetriesExhausted(_)
            | Error::NotStochastic(_)
            | Error::Reducible
            | Error::Periodic(_)
            | Error::NonFinite(_) => true,
            Error::AtIteration { source, .. } => source.is_validation_failure(),
            _ => false,
        }
    }
}
