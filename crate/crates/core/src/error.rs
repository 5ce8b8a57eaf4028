use thiserror::Error;

/// Coarse classification of failures, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input text or files.
    Parse,
    /// A documented precondition of an operation does not hold.
    Precondition,
    /// Evaluation produced (or would produce) non-finite or ill-conditioned values.
    Numeric,
    /// Underlying I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum FtfiError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("tree has {n} vertices, pivot decomposition needs at least {min}")]
    TreeTooSmall { n: usize, min: usize },

    #[error("dense guard exceeded: n = {n} > {limit} (override required)")]
    DenseGuard { n: usize, limit: usize },

    #[error("strategy {strategy} cannot be used here: {reason}")]
    IncompatibleStrategy { strategy: String, reason: String },

    #[error("exponential overflow: argument {arg:.3e} exceeds 700, rescale the inputs")]
    ExpOverflow { arg: f64 },

    #[error("f is not finite at distance {at}")]
    NonFiniteEval { at: f64 },

    #[error("denominator vanishes near {at}")]
    Pole { at: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("non-positive normalizer at row {row} ({value:e})")]
    NonPositiveNormalizer { row: usize, value: f64 },

    #[error("optimization diverged at step {step}")]
    Diverged { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FtfiError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            FtfiError::Parse { .. } => ErrorKind::Parse,
            FtfiError::Io(_) => ErrorKind::Io,
            FtfiError::ExpOverflow { .. }
            | FtfiError::NonFiniteEval { .. }
            | FtfiError::Pole { .. }
            | FtfiError::NonFinite(_)
            | FtfiError::NonPositiveNormalizer { .. }
            | FtfiError::Diverged { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Precondition,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FtfiError::InvalidInput(msg.into())
    }
}

pub type Result<T, E = FtfiError> = std::result::Result<T, E>;
