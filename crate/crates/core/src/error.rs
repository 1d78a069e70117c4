use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("C = {c}: {source}")]
    Sweep {
        c: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Innermost error, looking through sweep wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sweep { source, .. } => source.root(),
            other => other,
        }
    }
}
