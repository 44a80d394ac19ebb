use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for {count} remote antenna units")]
    RauIndex { index: usize, count: usize },

    /// A parameter combination outside the range a diversity result or
    /// processing stage is defined for.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rank-deficient matrix: rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("too few qualifying points for slope fit: {found} (need at least {needed})")]
    InsufficientPoints { found: usize, needed: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
