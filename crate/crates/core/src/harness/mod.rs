//! Cross-validation, hyperparameter search, crime-level stratification and the
//! experiment grid.

mod cv;
mod experiments;
mod folds;
mod metrics;
mod report;
mod split;

pub use cv::{cv_predict, nested_cv, select_hyperparameters, NestedCv, Selection, SelectionSpec};
pub use experiments::{
    cross_city_transfer, run_city_experiment, run_pooled_high_model, socio_baseline, CityData, CityRun, ExperimentKind, HarnessConfig,
    PearsonRow, Skipped, SocioRun,
};
pub use folds::{derive_seed, kfold_split, FoldAssignment};
pub use metrics::{pearson, percentile, percentile_sorted, r_squared, rmse, MetricError};
pub use report::{EvalReport, EvalRow, FoldChoice, Hyperparameters, Metrics, R2_DEFINITION};
pub use split::{split_by_crime_level, SplitRule, StratifiedSplit};

use thiserror::Error;

use crate::elastic_net::FitError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("{n} tracts cannot be split into {k} folds")]
    TooFewTracts { n: usize, k: usize },
    #[error("fold {fold} leaves only {rows} training rows")]
    TrainingFoldTooSmall { fold: usize, rows: usize },
    #[error("fold vector has {got} entries for {expected} rows")]
    FoldLengthMismatch { expected: usize, got: usize },
    #[error("alpha grid is empty")]
    EmptyAlphaGrid,
    #[error("feature layouts differ: {0}")]
    LayoutMismatch(String),
    #[error("high-crime pooling needs at least 2 contributing cities, found {0}")]
    TooFewCities(usize),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
