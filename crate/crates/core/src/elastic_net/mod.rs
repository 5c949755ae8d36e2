//! Elastic-net regression by cyclic coordinate descent.
//!
//! The solver minimizes, over standardized features `Xs` and centered response `yc`,
//!
//! ```text
//! (1/2n)‖yc − Xs·β‖² + λ(α‖β‖₁ + (1−α)‖β‖²/2)
//! ```
//!
//! with `α = 1` the lasso and `α = 0` ridge. The intercept is the training mean of `y`.

mod model;
mod path;
mod solver;
mod standardize;

pub use model::ElasticNetModel;
pub use path::{fit_path, lambda_path, PathSpec};
pub use solver::{coordinate_descent, kkt_violations, objective, soft_threshold, Solution, SolverParams};
pub use standardize::{standardize, StandardizationParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("non-finite response at row {0}")]
    NonFiniteResponse(usize),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("x has {x_rows} rows but y has {y_len} entries")]
    LengthMismatch { x_rows: usize, y_len: usize },
    #[error("expected {expected} feature columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("lambda must be a non-negative number, got {0}")]
    BadLambda(f64),
    #[error("lambda path needs at least 2 values and ratio in (0, 1); got {n_values} and {ratio}")]
    BadPathSpec { n_values: usize, ratio: f64 },
    #[error("warm start has {got} coefficients, expected {expected}")]
    WarmStartMismatch { expected: usize, got: usize },
    #[error("model file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
