use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("embedding window needs {expected} samples, got {actual}")]
    WindowSize { expected: usize, actual: usize },

    #[error("embedding order {order} exceeds the supported maximum {max}")]
    OrderCap { order: usize, max: usize },

    #[error("kernel support {support:.6}s is shorter than 3 sigma ({three_sigma:.6}s)")]
    KernelTruncation { support: f64, three_sigma: f64 },

    #[error("matrix `{name}` is not {property}")]
    NotDefinite { name: &'static str, property: &'static str },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("series too short: need at least {needed} samples, got {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("input channel {channel} has zero range (max == min)")]
    DegenerateRange { channel: usize },

    #[error("state series unavailable: {0}")]
    MissingStates(&'static str),

    #[error("estimate diverged at step {step}")]
    Divergence { step: usize },

    #[error("innovation covariance is not invertible at step {step}")]
    SingularInnovation { step: usize },

    #[error("observer assembly self-check failed: |A2 - eps_X' Pi eps_X| = {residual:e}")]
    AssemblySelfCheck { residual: f64 },

    #[error("augmented state dimension {dim} exceeds limit {max}")]
    AugmentedTooLarge { dim: usize, max: usize },

    #[error("unknown input observer design failed: {0}")]
    UioDesign(String),

    #[error("flight log schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("flight log row {row}: {reason}")]
    LogRow { row: usize, reason: String },

    #[error("flight log: {0}")]
    Log(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
