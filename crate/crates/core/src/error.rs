use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by samplers, learners and protocol runs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("realizability violation: {0}")]
    Realizability(String),

    #[error("learner failure: {0}")]
    LearnerFailure(String),

    #[error("mistake cap of {cap} exceeded")]
    MistakeCap { cap: u64 },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("update cap of {cap} exceeded; data does not look separable at the declared margin")]
    NonSeparable { cap: u64 },

    #[error("no convergence within {cap} rounds")]
    NonConvergence { cap: u64 },

    #[error("weak learner returned error {error} > 1/2")]
    WeakLearningFailure { error: f64 },

    #[error("every hypothesis was eliminated; the opt guess is too small")]
    HalvingCollapse,

    #[error("no opt guess up to 1/2 produced an accepted hypothesis")]
    SearchFailure,

    #[error("i/o error: {0}")]
    Io(String),

    #[error("privacy budget exhausted after {spent} of {declared} queries")]
    BudgetExhausted { spent: u64, declared: u64 },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
