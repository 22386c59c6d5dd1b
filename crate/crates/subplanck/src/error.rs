use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum SubplanckError {
    /// Operands live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A constructor or operation received parameters it cannot honor.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A state does not satisfy a required structural property
    /// (normalization, Hermiticity, positivity, finite spread).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Requested wavepacket support does not fit the grid with the
    /// required margin.
    #[error("support violation: {0}")]
    SupportViolation(String),

    /// Evolution produced a non-finite amplitude.
    #[error("numeric blowup at step {step} (t = {time}): {detail}")]
    Blowup {
        step: usize,
        time: f64,
        detail: String,
    },

    /// A scan never reached its target threshold.
    #[error("saturation failure: {0}")]
    SaturationFailure(String),

    /// A binary grid file failed validation; `offset` is the byte position
    /// of the first inconsistency.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SubplanckError>;
