use thiserror::Error;

use crate::chain::ValidationReport;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("kernel is reducible (support graph not strongly connected)")]
    Reducible,

    #[error("stationary solver did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("chain is not reversible")]
    NotReversible,

    #[error("symmetric eigensolver failed to converge")]
    EigenFailure,

    #[error("uniformization needs {needed} terms, budget is {max_terms}")]
    BudgetExceeded { needed: usize, max_terms: usize },

    #[error("distance still above epsilon at the search horizon t = {horizon}")]
    NoUpperBracket { horizon: f64 },

    #[error("stationary mass is zero at state {state}")]
    ZeroStationaryMass { state: usize },

    #[error("operation not defined for distance kind {0}")]
    InvalidKind(&'static str),

    #[error("state space of {size} states exceeds the oracle limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("t = {t} is below the tail-bound threshold {min}")]
    TimeTooSmall { t: f64, min: f64 },

    #[error("weights must be nondecreasing: p[{index}] < p[{prev}]", prev = index - 1)]
    MonotonicityViolated { index: usize },

    #[error("rates vanish at coordinate {index}")]
    DegenerateRates { index: usize },

    #[error("inadmissible parameters: {0}")]
    InadmissibleParams(String),

    #[error("unknown weight schedule `{0}`")]
    UnknownSchedule(String),

    #[error("outside the domain: {0}")]
    DomainError(String),

    #[error("mixing time at index {index} is not positive")]
    NonPositiveMixingTime { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid product: {0}")]
    InvalidProduct(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("chain failed validation: {0}")]
    Validation(ValidationReport),

    #[error("stationary cross-check failed: discrepancy {discrepancy:e}")]
    StationaryMismatch { discrepancy: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::EigenFailure
                | Error::BudgetExceeded { .. }
                | Error::NoUpperBracket { .. }
                | Error::StationaryMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
