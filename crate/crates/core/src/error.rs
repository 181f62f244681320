use thiserror::Error;

/// Errors produced anywhere in the matching pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("numerical underflow: {0}; retry with log-domain iterations")]
    NumericalUnderflow(String),

    #[error("instance too large for the exact oracle: {rows}x{cols}")]
    UnsupportedSize { rows: usize, cols: usize },

    #[error("global embedding is degenerate: {0}")]
    InvalidGlobal(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    #[error("pair (image {image_id}, caption {caption_id}) failed: {source}")]
    Pair {
        image_id: u32,
        caption_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Strips any per-pair wrapper, returning the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
