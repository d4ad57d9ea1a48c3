use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate edge ({source_id}, {target_id})")]
    DuplicateEdge { source_id: String, target_id: String },

    #[error("self-loop on node {0}")]
    SelfLoop(String),

    #[error("{0}")]
    Validation(String),

    #[error("edge probabilities are unassigned; apply a probability model first")]
    UnassignedProbabilities,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("enumeration refused: {what} = {actual} exceeds limit {limit}")]
    Refused {
        what: &'static str,
        actual: u128,
        limit: u128,
    },

    #[error("invalid budget split: {0}")]
    InvalidSplit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors raised because an exhaustive computation would be too large.
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::Refused { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
