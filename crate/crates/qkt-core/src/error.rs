//! Error type shared by the engine.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EngineError {
    #[error("ring context mismatch")]
    ContextMismatch,

    #[error("correlator data incomplete: missing key {key}")]
    DataIncomplete { key: String },

    #[error("function has a pole at the requested point")]
    Singularity,

    #[error("scalar requires a cyclotomic extension not available in this coefficient ring")]
    NeedsCyclotomic,

    #[error("series is not a unit (constant term not invertible)")]
    NotAUnit,

    #[error("fixed-point iteration failed to contract at step {step}: residual weight {weight} did not increase")]
    NonContraction { step: u32, weight: u32 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("table format error: {0}")]
    Format(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}
