use thiserror::Error;

/// Errors produced by the sampler, the training loop and the harness.
#[derive(Debug, Error)]
pub enum SlmcError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter vector is not unit-norm where one is required.
    #[error("parameter vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    /// The pre-normalization output of a conditioner vanished.
    #[error("degenerate normalization: raw conditioner output has zero norm")]
    DegenerateNorm,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// Malformed grid target file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid experiment configuration.
    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SlmcError> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(SlmcError::Domain(msg.into()))
}
