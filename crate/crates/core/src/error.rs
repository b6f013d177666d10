use thiserror::Error;

/// Errors raised by risk functionals, mechanisms, learners and the harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tail mass must lie in (0, 1], got {0}")]
    InvalidTailMass(f64),
    #[error("loss bound must be finite and nonnegative, got {0}")]
    InvalidLossBound(f64),
    #[error("sample is empty")]
    EmptySample,
    #[error("loss value {value} at index {index} lies outside [0, {bound}]")]
    LossOutOfRange {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("envelope radius must be at least 1, got {0}")]
    InvalidEnvelope(f64),
    #[error("threshold {eta} lies outside [0, {bound}]")]
    ThresholdOutOfRange { eta: f64, bound: f64 },
    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("subgradient norm {norm} exceeds Lipschitz bound {bound}")]
    SubgradientTooLarge { norm: f64, bound: f64 },
    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),
    #[error("sensitivity must be finite and nonnegative, got {0}")]
    InvalidSensitivity(f64),
    #[error("score list is empty")]
    EmptyScores,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("slope fit needs at least 3 usable rows, got {0}")]
    TooFewRows(usize),
    #[error("nonpositive mean {0} cannot be log-transformed")]
    NonPositiveMean(f64),
    #[error("instance format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
