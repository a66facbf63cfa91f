use crate::proximity::AgentId;

/// Errors raised by the training engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid agent id {id} for a team of {count}")]
    InvalidAgent { id: AgentId, count: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("neighborhood of {got} agents exceeds padding capacity {max}")]
    TooManyNeighbors { got: usize, max: usize },

    #[error("invalid action for agent {agent}: {reason}")]
    InvalidAction { agent: AgentId, reason: String },

    #[error("agent {other} is not a one-hop neighbor of agent {subject}")]
    NotLocal { subject: AgentId, other: AgentId },

    #[error("record lacks next-step neighborhood of agent {0}")]
    MissingNeighborhood(AgentId),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("timed out waiting for updates from agents {missing:?}")]
    Timeout { missing: Vec<AgentId> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid tabular model: {0}")]
    InvalidMdp(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
