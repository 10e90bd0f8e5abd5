//! Crate-wide error type.

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by pad modeling, the wire protocol, simulation,
/// calibration, and fusion.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates an invariant (grid dims, ADC depth,
    /// normalization bounds, shape parameters, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A row/column or payload index is outside the grid.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A caller broke an operation precondition (length mismatch,
    /// negative depth, wrong modality tag, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Byte stream does not delimit a frame (bad sync, truncation).
    #[error("framing error: {0}")]
    Framing(String),

    /// Frame header is well formed but not understood (version, config id).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Frame failed its integrity checks (CRC, value range).
    #[error("corrupt frame: {0}")]
    Corrupt(String),

    /// A frame cannot be serialized against its declared config.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Underlying byte sink or source failed.
    #[error("transport error: {0}")]
    Transport(#[from] std::io::Error),

    /// Scene description failed to parse or validate.
    #[error("scene error: {0}")]
    Scene(String),

    /// Calibration input carries no usable excitation.
    #[error("unidentifiable calibration: {0}")]
    Unidentifiable(String),

    /// CSV input/output failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs/configuration rather than
    /// by the environment (I/O, transport). CLI layers map these to a
    /// distinct exit code.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Transport(_))
    }
}
