use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("the zero vector cannot be in an offspring support")]
    ZeroVectorInSupport,
    #[error("probabilities sum to {0}, not 1")]
    ProbabilitiesDontSumToOne(f64),
    #[error("support point {0:?} appears more than once")]
    DuplicateSupportPoint(Vec<u64>),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("reproduction matrix is not positively regular")]
    NotPositivelyRegular,
    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("population {size} exceeds the cap {cap} at generation {generation}")]
    PopulationOverflow {
        generation: usize,
        size: u64,
        cap: u64,
    },
    #[error("sample size {r} exceeds population {population}")]
    SampleExceedsPopulation { r: u64, population: u64 },
    #[error("invalid sample size: {0}")]
    InvalidSampleSize(String),
    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),
    #[error("empty sample")]
    EmptySample,
    #[error("model construction failed: {0}")]
    ModelConstructionFailed(String),
    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),
}
