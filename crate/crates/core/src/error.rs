use thiserror::Error;

/// Errors raised by the pose estimation kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("symmetry prior has no reflection plane")]
    UnsupportedPrior,

    #[error("observation has no valid pixels")]
    NoObservation,

    #[error("gravity pruning left no pose hypotheses")]
    EmptyHypotheses,

    #[error("degenerate overlap: {found} correspondences, need {required}")]
    DegenerateOverlap { found: usize, required: usize },

    #[error("no hypotheses to select from")]
    NoHypothesis,

    #[error("metric undefined for an empty error list")]
    UndefinedMetric,

    /// Malformed file content, located by byte offset.
    #[error("{file}: {message} at byte {offset}")]
    Parse { file: String, offset: usize, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_error(file: impl Into<String>, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.into(),
        offset,
        message: message.into(),
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
