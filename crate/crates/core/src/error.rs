use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("duplicate product id `{0}`")]
    DuplicateId(String),

    #[error("product `{0}` has an empty title")]
    EmptyTitle(String),

    #[error("unknown product id `{0}`")]
    UnknownProduct(String),

    #[error("negative sampling needs at least 2 components, found {0}")]
    NoNegativePool(usize),

    #[error("need at least 2 triples per class for a stratified split (positives: {positives}, negatives: {negatives})")]
    TooFewTriples { positives: usize, negatives: usize },

    #[error("zero-norm vector{}", .0.as_ref().map(|id| format!(" for product `{id}`")).unwrap_or_default())]
    ZeroNorm(Option<String>),

    #[error("non-finite value in `{0}`")]
    Numerical(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("product `{0}` is not covered by this recommender")]
    NoCoverage(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing artifact {0} (run the upstream stage first)")]
    MissingArtifact(PathBuf),

    #[error("stale artifact {path}: {reason}")]
    StaleArtifact { path: PathBuf, reason: String },
}

/// Coarse grouping of errors, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::Numerical(_) | Error::ZeroNorm(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
