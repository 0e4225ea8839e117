use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reward: {0}")]
    InvalidReward(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate noise level sigma={0}")]
    DegenerateNoiseLevel(f64),

    #[error("undefined cosine: sample {0} has zero norm")]
    UndefinedCosine(usize),

    #[error("training diverged at step {step}: loss={loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("non-finite loss from trajectory {index}")]
    NonFiniteLoss { index: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (divergence, NaN losses) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Diverged { .. } | Error::NonFiniteLoss { .. })
    }
}
