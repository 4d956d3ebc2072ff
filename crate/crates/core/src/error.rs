use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph is disconnected: node {unreachable} is unreachable from node 1")]
    DisconnectedGraph { unreachable: usize },

    #[error("invalid edge ({0}, {1}): {2}")]
    InvalidEdge(usize, usize, &'static str),

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("insufficient rows: total {rows} < feature dimension {features}")]
    InsufficientRows { rows: usize, features: usize },

    #[error("design matrix is rank deficient (numerical rank {rank} < {features}){}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    RankDeficient {
        rank: usize,
        features: usize,
        node: Option<usize>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bound violation at node {node}: {what} = {value} exceeds {bound}")]
    BoundViolation {
        node: usize,
        what: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid schedule parameters: {0}")]
    InvalidSchedule(String),

    #[error("closed-form budget regime violated: {0}")]
    RegimeViolation(String),

    #[error("noise scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("non-finite state at round {round}, node {node}")]
    NonFiniteState { round: usize, node: usize },

    #[error("node {receiver} attempted to read a payload from non-neighbor {sender} in round {round}")]
    NotNeighbor {
        receiver: usize,
        sender: usize,
        round: usize,
    },

    #[error("datasets are not adjacent: {0}")]
    NotAdjacent(String),

    #[error("trajectory is not auditable: {0}")]
    NonAuditable(String),

    #[error("trajectories do not share a configuration: {0}")]
    ConfigMismatch(String),

    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
