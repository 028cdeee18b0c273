use thiserror::Error;

/// Errors surfaced by model fitting, prediction, and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A delimited input file failed validation; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    /// A covariance/kernel matrix could not be factorized even after the
    /// jitter escalation policy was exhausted.
    #[error("singular model: {0}")]
    SingularModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 2 for data problems, 3 for numerical failures.
    /// (Usage errors exit 1 and are handled before any `Error` exists.)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularModel(_) => 3,
            _ => 2,
        }
    }
}
