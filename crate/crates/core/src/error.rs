use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("exponent 1 is excluded from the model")]
    ExponentOne,
    #[error("horizon {horizon} too small (minimum {min})")]
    HorizonTooSmall { horizon: usize, min: usize },
    #[error("requested range {requested} exceeds cached horizon {cached}")]
    HorizonExceedsCache { requested: usize, cached: usize },
    #[error("path has {available} gaps, {requested} requested")]
    NotEnoughGaps { requested: usize, available: usize },
    #[error("convolution cap {cap} is smaller than the number of steps {steps}")]
    CapTooSmall { cap: usize, steps: usize },
    #[error("target set element {element} outside [1, {max}]")]
    SetOutOfRange { element: usize, max: usize },
    #[error("disorder exponent must exceed 1, got {0}")]
    DisorderExponentTooSmall(f64),
    #[error("environment has length {env_len}, system size {size} requested")]
    EnvironmentTooShort { env_len: usize, size: usize },
    #[error("beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("system size {size} too large for brute-force enumeration (max {max})")]
    TooLargeForBruteForce { size: usize, max: usize },
    #[error("contact cap {cap} exceeds system size {size}")]
    CapExceedsSize { cap: usize, size: usize },
    #[error("partition table does not match the instance: {0}")]
    InconsistentTable(String),
    #[error("operation requires an independent-sign (construction A) environment")]
    WrongConstruction,
    #[error("invalid block partition: {0}")]
    BadPartition(String),
    #[error("fit has insufficient signal: {0}")]
    InsufficientSignal(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed environment encoding: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
