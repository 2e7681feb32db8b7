use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {got} values but the grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "Picard iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    PicardNotConverged { iterations: usize, residual: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("action vector is empty")]
    EmptyAction,

    #[error("episode is finished; reset the environment first")]
    EpisodeFinished,

    #[error("environment has not been reset")]
    NotReset,

    #[error("replay buffer holds {len} transitions but a batch of {batch} was requested")]
    InsufficientReplay { len: usize, batch: usize },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
