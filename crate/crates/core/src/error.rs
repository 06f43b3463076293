use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("simulation diverged at sample {sample}")]
    SimulationDiverged { sample: usize },

    #[error("ground-motion generation failed: {0}")]
    GenerationFailed(String),

    #[error("invalid Fisher information matrix: {0}")]
    InvalidFisher(String),

    #[error("invalid action {action}: {reason}")]
    InvalidAction { action: usize, reason: String },

    #[error("no actions available in a terminal state")]
    TerminalState,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged: {0}")]
    DivergedTraining(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
