use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arm set is empty")]
    EmptyArms,

    #[error("timestep must be >= 1")]
    ZeroTimestep,

    #[error("arm index {index} out of range (arm count {len})")]
    ArmOutOfRange { index: usize, len: usize },

    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid reward parameters: {0}")]
    InvalidRewardParams(String),

    #[error("accuracy {0} outside [0, 1]")]
    AccuracyOutOfRange(f64),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("x = {x} exceeds the number of configurations ({cardinality})")]
    RecallTooLarge { x: usize, cardinality: usize },

    #[error("x must be >= 1")]
    RecallZero,

    #[error("batch size {batch_size} exceeds query count {queries}")]
    BatchTooLarge { batch_size: usize, queries: usize },

    #[error("replay table is missing {} (config, query) pairs; first: {}", .missing.len(), .missing.first().map(|(c, q)| format!("({c}, {q})")).unwrap_or_default())]
    MissingReplayPairs { missing: Vec<(String, String)> },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("environment `{0}` does not support exhaustive evaluation")]
    NotExhaustive(String),

    #[error("invalid run configuration: {0}")]
    InvalidRun(String),

    #[error("unknown sweep parameter `{0}`")]
    UnknownSweepKey(String),

    #[error("invalid value `{value}` for sweep parameter `{key}`")]
    InvalidSweepValue { key: String, value: String },

    #[error("trajectories have misaligned checkpoints")]
    MisalignedCheckpoints,

    #[error("no trajectories to aggregate")]
    NoTrajectories,

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("remote transport failure (retryable): {0}")]
    Transport(String),

    #[error("remote response violates schema: {message}; payload: {excerpt}")]
    Schema { message: String, excerpt: String },

    #[error("remote endpoint rejected the request with status {status}: {excerpt}")]
    Rejected { status: u16, excerpt: String },

    #[error("spaces differ between phases")]
    SpaceMismatch,

    #[error("evaluated configuration does not match the pending selection")]
    ConfigMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Transport(_) => true,
            Error::Trial { source, .. } => source.is_retryable(),
            _ => false,
        }
    }

    pub(crate) fn at_trial(self, trial: usize) -> Error {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }
}
