use thiserror::Error;

/// Errors raised by model construction, the LP kernel, cone construction and the solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("row {row}: constraint polytope is empty")]
    InfeasibleModel { row: usize },

    #[error("row {row}: constraint polytope is unbounded")]
    UnboundedModel { row: usize },

    #[error("target is not a non-negative combination of the candidates (phase-1 residual {residual:e})")]
    NotInCone { residual: f64 },

    #[error("row {row}: active constraints have rank {rank}, expected {expected}")]
    RankDeficientActiveSet {
        row: usize,
        rank: usize,
        expected: usize,
    },

    #[error("row {row}: cone basis condition estimate {condition:e} exceeds limit")]
    IllConditionedBasis { row: usize, condition: f64 },

    #[error("partial-sum series did not reach the tail tolerance within {cap} terms")]
    SeriesCapExceeded { cap: usize },

    #[error(
        "error budget exhausted at t = {time}: step of length {dt:e} needs {required:e}, allowed {allowed:e}"
    )]
    BudgetExhausted {
        time: f64,
        dt: f64,
        required: f64,
        allowed: f64,
        /// Steps accepted before the failure.
        partial: Option<Box<crate::solver::SolveReport>>,
    },

    #[error("{steps} Euler steps are too coarse: need at least {required}")]
    StepTooCoarse { steps: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
