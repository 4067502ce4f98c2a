use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mutation leaves the capability vector unchanged")]
    NoChange,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("infeasible assignment, uncovered subtasks: {}", uncovered.join(", "))]
    Infeasible { uncovered: Vec<String> },

    #[error("decomposition produced no proposals")]
    EmptyDecomposition,

    #[error("consensus failed: {0}")]
    ConsensusFailed(String),

    #[error("submission blocked by policy: {0}")]
    PolicyBlocked(String),

    #[error("routing failed: {0}")]
    Routing(String),

    #[error("timed out: {0}")]
    TimedOut(String),

    #[error("broker unavailable")]
    Unavailable,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
