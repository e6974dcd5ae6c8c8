use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad grouping used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exponent argument {argument:.6e} exceeds the overflow cap {cap}")]
    ExponentOverflow { argument: f64, cap: f64 },

    #[error("covariance matrix is not positive definite ({0})")]
    SingularCovariance(String),

    #[error("Poisson truncation for intensity {intensity} needs more than {max_terms} terms to reach tail mass {tail_mass:e}")]
    TruncationBudgetExceeded {
        intensity: f64,
        max_terms: usize,
        tail_mass: f64,
    },

    #[error("EVaR objective still decreasing at the bracket cap s = {cap:e}")]
    NoInteriorMinimum { cap: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("quadratic form {0:e} is negative")]
    NegativeQuadraticForm(f64),

    #[error("target return {target} outside attainable range [{min}, {max}]")]
    InfeasibleTarget { target: f64, min: f64, max: f64 },

    #[error("solver stalled with stationarity {stationarity:e} after {iterations} iterations")]
    SolverStall {
        stationarity: f64,
        iterations: usize,
        best_weights: Vec<f64>,
        best_objective: f64,
    },

    #[error("implied covariance G is singular ({0})")]
    SingularG(String),

    #[error("all {0} starts failed")]
    AllStartsFailed(usize),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("non-positive price {value} for {asset} on {date}")]
    NonPositivePrice {
        asset: String,
        date: String,
        value: f64,
    },

    #[error("no dates shared by every asset")]
    EmptyIntersection,

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "INVALID_PARAMETER",
            Error::ExponentOverflow { .. } => "EXPONENT_OVERFLOW",
            Error::SingularCovariance(_) => "SINGULAR_COVARIANCE",
            Error::TruncationBudgetExceeded { .. } => "TRUNCATION_BUDGET_EXCEEDED",
            Error::NoInteriorMinimum { .. } => "NO_INTERIOR_MINIMUM",
            Error::EmptySample => "EMPTY_SAMPLE",
            Error::NegativeQuadraticForm(_) => "NEGATIVE_QUADRATIC_FORM",
            Error::InfeasibleTarget { .. } => "INFEASIBLE_TARGET",
            Error::SolverStall { .. } => "SOLVER_STALL",
            Error::SingularG(_) => "SINGULAR_G",
            Error::AllStartsFailed(_) => "ALL_STARTS_FAILED",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::NonPositivePrice { .. } => "NON_POSITIVE_PRICE",
            Error::EmptyIntersection => "EMPTY_INTERSECTION",
            Error::TooFewRows { .. } => "TOO_FEW_ROWS",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter(_) | Error::Json(_) => ErrorCategory::Config,
            Error::Parse { .. }
            | Error::NonPositivePrice { .. }
            | Error::EmptyIntersection
            | Error::TooFewRows { .. }
            | Error::EmptySample
            | Error::Io(_) => ErrorCategory::Data,
            _ => ErrorCategory::Solver,
        }
    }
}
