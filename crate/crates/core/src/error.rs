use thiserror::Error;

/// Errors raised by every operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("row {row} sums to {sum}, which is not a probability distribution")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("negative probability {value} at row {row}, column {col}")]
    NegativeProbability { row: usize, col: usize, value: f64 },

    #[error("non-finite probability at row {row}, column {col}")]
    NonFiniteProbability { row: usize, col: usize },

    #[error("the {0} set is empty")]
    EmptySet(&'static str),

    #[error("non-finite cost at state {state}, action {action}, successor {next}")]
    NonFiniteCost { state: usize, action: usize, next: usize },

    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),

    #[error("horizon mismatch: expected {expected}, found {found}")]
    HorizonMismatch { expected: usize, found: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid action {action} at time {time}, state {state}")]
    InvalidAction { time: usize, state: usize, action: usize },

    #[error("decision rule at time {time}, state {state} is not a distribution (sum {sum})")]
    UnnormalizedRule { time: usize, state: usize, sum: f64 },

    #[error("enumeration needs {required} entries, above the cap of {cap}")]
    EnumerationCapExceeded { required: u128, cap: u64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("path functional is not finite on a path with positive probability")]
    NonFiniteFunctionalOnSupport,

    #[error("distribution puts mass on index {index} where the reference has none")]
    SupportViolation { index: usize },

    #[error("rho must be strictly negative, got {0}")]
    NonNegativeRho(f64),

    #[error("row {row} has no mass left after tilting")]
    DegenerateRow { row: usize },

    #[error("performance target {target} is outside the attainable range [{low}, {high}]")]
    UnattainablePerformance { target: f64, low: f64, high: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("distribution sums to {sum}, not 1")]
    Unnormalized { sum: f64 },

    #[error("protocol has length {found}, expected {expected}")]
    ProtocolLengthMismatch { expected: usize, found: usize },

    #[error("kernel at step {step} is not irreducible")]
    NotIrreducible { step: usize },

    #[error("detailed balance fails at step {step}: backward row {row} sums to {sum}")]
    DetailedBalanceViolated { step: usize, row: usize, sum: f64 },

    #[error("detailed-balance mode needs an energy model")]
    MissingEnergyModel,

    #[error("the observation has zero likelihood under every candidate")]
    ZeroLikelihoodEverywhere,

    #[error("target {target} is not bracketed by the responses [{low}, {high}]")]
    NotBracketed { target: f64, low: f64, high: f64 },

    #[error("the response is not monotone over the search bracket")]
    NonMonotoneResponse,

    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    CapExceeded,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::EnumerationCapExceeded { .. } => ErrorKind::CapExceeded,
            Error::DegenerateRow { .. }
            | Error::UnattainablePerformance { .. }
            | Error::NoConvergence { .. }
            | Error::NotIrreducible { .. }
            | Error::DetailedBalanceViolated { .. }
            | Error::ZeroLikelihoodEverywhere
            | Error::NotBracketed { .. }
            | Error::NonMonotoneResponse => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
