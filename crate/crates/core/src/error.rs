use thiserror::Error;

use crate::solver::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("claim expects a path of length {expected}, got {got}")]
    PathLength { expected: usize, got: usize },

    #[error("index level must be positive, got {0}")]
    NonPositiveLevel(f64),

    #[error("density evaluation failed: {0}")]
    Density(String),

    #[error("grid construction failed: {0}")]
    Grid(String),

    #[error("basis strike {strike} of period {period} is not a grid node")]
    StrikeMismatch { period: usize, strike: f64 },

    #[error("transaction cost must be nonnegative, got {0}%")]
    NegativeTransactionCost(f64),

    #[error("custom claim has no payout for path {0:?}")]
    MissingCustomValue(Vec<f64>),

    #[error("solver finished with status {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("indifference bracket not found after {0} doublings")]
    BracketExpansion(usize),
}
