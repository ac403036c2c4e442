use thiserror::Error;

/// Errors surfaced by the system, pressure, and construction layers.
#[derive(Debug, Error)]
pub enum NifsError {
    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("point outside the system domain: {0}")]
    Domain(String),

    #[error("enumeration over {needed} words exceeds the cap of {cap}")]
    Capacity { needed: f64, cap: u64 },

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("inconsistent numerical evidence: {0}")]
    Inconsistent(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("invalid system description: {0}")]
    Invalid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NifsError>;
