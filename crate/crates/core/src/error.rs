use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("episode finished")]
    EpisodeFinished,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("agent index {index} out of range for {count} agents")]
    AgentIndex { index: usize, count: usize },
    #[error("non-finite fitness {value} at position {position:?}")]
    NonFiniteFitness { value: f64, position: Vec<f64> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("replay buffer holds {len} transitions, cannot sample {requested}")]
    Underfilled { len: usize, requested: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
