use thiserror::Error;

/// Errors surfaced by the inference and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("time {time} outside observation window [{start}, {end}]")]
    OutsideWindow { time: f64, start: f64, end: f64 },

    #[error("partition is not contiguous at index {index}")]
    BrokenPartition { index: usize },

    #[error("endpoint-conditioned bridge impossible: P[{from}][{to}] = 0")]
    ImpossibleBridge { from: usize, to: usize },

    #[error("rejection sampler exhausted {attempts} attempts")]
    RetryBudgetExceeded { attempts: u64 },

    #[error("rate matrix is defective or too ill-conditioned for a spectral decomposition")]
    NearDefective,

    #[error("no jump possible from a state with zero exit rate")]
    NoExit,

    #[error("inconsistent skeleton endpoints: zero mass for {from} -> {to}")]
    InconsistentSkeleton { from: usize, to: usize },

    #[error("no subject eligible for event at time {time}")]
    NoEligibleSubject { time: f64 },

    #[error("path initialization failed after {attempts} attempts; check priors, initial parameters and data")]
    InitializationFailed { attempts: u64 },

    #[error("proposal covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("particle filter needs at least one particle")]
    NoParticles,

    #[error("non-finite initial log-likelihood after {attempts} attempts")]
    NonFiniteLikelihood { attempts: u64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("trace too short for diagnostics: {len} < {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
