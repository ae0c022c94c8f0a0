use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    /// A retained eigenvalue is not strictly positive, so `S^{1/2}` is undefined.
    /// `index` is 1-based.
    #[error("indefinite spectrum: eigenvalue #{index} is {value:e}, embedding requires it to be > 0")]
    IndefiniteSpectrum { index: usize, value: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("clustering error: {0}")]
    Clustering(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("provenance error: {0}")]
    Provenance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error classes, used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Config,
    Ingestion,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Config => 3,
            ErrorCategory::Ingestion => 4,
            ErrorCategory::Numerical => 5,
            ErrorCategory::Io => 6,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Argument(_) | Error::Domain(_) | Error::DegenerateLabels(_) => ErrorCategory::Usage,
            Error::Config(_) => ErrorCategory::Config,
            Error::Ingestion { .. } | Error::Provenance(_) | Error::Csv(_) | Error::Json(_) => ErrorCategory::Ingestion,
            Error::DegenerateSpectrum(_)
            | Error::IndefiniteSpectrum { .. }
            | Error::Numerical(_)
            | Error::Clustering(_) => ErrorCategory::Numerical,
            Error::Io(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
