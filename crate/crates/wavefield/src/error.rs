use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum WaveError {
    #[error("channel mismatch: expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation diverged at step {step} (max |h| = {max_abs:.3e})")]
    Diverged { step: usize, max_abs: f64 },

    #[error("unstable configuration: c*dt = {cdt:.6} exceeds the stability bound {limit:.6}")]
    Unstable { cdt: f64, limit: f64 },

    #[error("no spectral peak above the noise floor")]
    NoPeak,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WaveError>;
