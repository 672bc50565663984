use thiserror::Error;

/// Errors produced by the analytics library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("duplicate assignment id `{0}`")]
    DuplicateAssignment(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient overlap between rating sequences")]
    InsufficientOverlap,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("incomplete submission: missing answer for `{0}`")]
    IncompleteSubmission(String),

    #[error("degenerate record: {0}")]
    DegenerateRecord(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("judge error: {0}")]
    Judge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True when the error originates from the filesystem or network rather
    /// than from the content of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
