use thiserror::Error;

/// Errors raised while building, compiling or running a distributed problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("block ({row},{col}): {msg}")]
    Structure { row: usize, col: usize, msg: String },

    #[error("problem: {0}")]
    Malformed(String),

    #[error("block ({row},{col}) has owner {owner}, expected 1..={agents}")]
    Ownership {
        row: usize,
        col: usize,
        owner: usize,
        agents: usize,
    },

    #[error("h split for row partition {row}: {msg}")]
    Split { row: usize, msg: String },

    #[error("h split for row partition {row}: agent {agent} does not own a block in that row")]
    Membership { row: usize, agent: usize },

    #[error("agent {agent} is outside 1..={nodes}")]
    UnknownNode { agent: usize, nodes: usize },

    #[error("invalid edge ({0},{1})")]
    InvalidEdge(usize, usize),

    #[error("({0},{1}) is not an edge of the communication graph")]
    NotAnEdge(usize, usize),

    #[error("empty node set")]
    EmptyNodeSet,

    #[error("induced subgraph on {nodes:?} is disconnected")]
    Disconnected { nodes: Vec<usize> },

    #[error("agent {agent} owns no block and therefore holds no variables")]
    NoVariables { agent: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("agent {agent}: local system not positive definite even after shift {shift:e}")]
    Factorization { agent: usize, shift: f64 },

    #[error("missing message on edge ({from}->{to}) in round {round}")]
    Protocol { from: usize, to: usize, round: usize },

    #[error("state dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("need at least {needed} usable samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
