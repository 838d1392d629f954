use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Fock cutoff {cutoff} too small: truncation leakage {leakage:.3e} exceeds {bound:.1e}")]
    CutoffTooSmall {
        cutoff: usize,
        leakage: f64,
        bound: f64,
    },

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("trajectory {index} has {len} steps, expected {expected}")]
    RaggedTrajectories {
        index: usize,
        len: usize,
        expected: usize,
    },

    #[error("invalid histogram range [{lo}, {hi}) with {bins} bins")]
    InvalidRange { lo: f64, hi: f64, bins: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
