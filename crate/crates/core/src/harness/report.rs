use serde::{Deserialize, Serialize};

use super::metrics::{pearson, r_squared, rmse, MetricError};
use super::HarnessError;

/// How every report's r² is computed.
pub const R2_DEFINITION: &str = "pooled out-of-fold 1 - SS_res/SS_tot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub tract_id: String,
    pub observed: f64,
    pub predicted: f64,
    /// Out-of-fold index; `None` for transfer predictions.
    pub fold: Option<usize>,
    pub split_label: String,
}

impl EvalRow {
    pub fn residual(&self) -> f64 {
        self.observed - self.predicted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse: f64,
    /// `None` when observed rates are constant; see `r_squared_note`.
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared_note: Option<String>,
    pub pearson: Option<f64>,
    pub pearson_squared: Option<f64>,
}

impl Metrics {
    pub fn from_rows(rows: &[EvalRow]) -> Result<Self, HarnessError> {
        let obs: Vec<f64> = rows.iter().map(|r| r.observed).collect();
        let pred: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
        let rmse = rmse(&obs, &pred)?;
        let (r_squared, r_squared_note) = match r_squared(&obs, &pred) {
            Ok(v) => (Some(v), None),
            Err(e @ (MetricError::ConstantObserved | MetricError::TooFew { .. })) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let pearson = pearson(&obs, &pred).ok();
        Ok(Self { n: rows.len(), rmse, r_squared, r_squared_note, pearson, pearson_squared: pearson.map(|p| p * p) })
    }
}

/// One outer fold's tuned hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldChoice {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub n_active: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment_id: String,
    pub city: String,
    pub category: String,
    pub split: String,
    /// Sorted by tract id.
    pub rows: Vec<EvalRow>,
    pub metrics: Metrics,
    pub r_squared_definition: String,
    /// Chosen by inner CV over every evaluated training row.
    pub hyperparameters: Hyperparameters,
    pub fold_choices: Vec<FoldChoice>,
    pub provenance: String,
    pub seed: u64,
    pub k: usize,
    pub converged: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, o: f64, p: f64) -> EvalRow {
        EvalRow { tract_id: id.into(), observed: o, predicted: p, fold: Some(0), split_label: "all".into() }
    }

    #[test]
    fn metrics_from_rows() {
        let rows = vec![row("a", 1.0, 1.0), row("b", 2.0, 2.0), row("c", 3.0, 3.0), row("d", 4.0, 5.0)];
        let m = Metrics::from_rows(&rows).unwrap();
        assert!((m.r_squared.unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(m.n, 4);
        assert!(m.pearson_squared.unwrap() <= 1.0);
    }

    #[test]
    fn constant_observed_is_reported_not_fatal() {
        let m = Metrics::from_rows(&[row("a", 2.0, 1.0), row("b", 2.0, 3.0)]).unwrap();
        assert_eq!(m.r_squared, None);
        assert!(m.r_squared_note.is_some());
        assert_eq!(m.rmse, 1.0);
    }
}
