use thiserror::Error;

/// Errors produced anywhere in the optimization stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operand shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A linear-algebra routine failed (e.g. singular Gram matrix).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The simulator produced a non-finite state.
    #[error("simulation fault at step {step}: {reason}")]
    SimulationFault { step: usize, reason: String },

    /// A candidate could not be evaluated.
    #[error("evaluation of sample {sample} failed: {source}")]
    Evaluation {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    /// A snapshot blob failed its integrity check.
    #[error("snapshot integrity error: {0}")]
    Integrity(String),
}

pub type Result<T> = std::result::Result<T, Error>;
