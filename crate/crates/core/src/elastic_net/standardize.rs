use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::FitError;

/// Column centering/scaling learned on training rows (1/n variance convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    /// Mean of every input column, dropped ones included.
    pub means: Vec<f64>,
    /// Standard deviation of every input column; zero-variance columns are dropped.
    pub stds: Vec<f64>,
    /// Ascending indices of dropped (zero-variance) columns.
    pub dropped: Vec<usize>,
    pub y_mean: f64,
}

impl StandardizationParams {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// Ascending indices of retained columns.
    pub fn retained(&self) -> Vec<usize> {
        (0..self.means.len()).filter(|j| self.dropped.binary_search(j).is_err()).collect()
    }

    /// Applies the stored transform to raw rows, returning only retained columns.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, FitError> {
        if x.ncols() != self.n_features() {
            return Err(FitError::ColumnMismatch { expected: self.n_features(), got: x.ncols() });
        }
        let keep = self.retained();
        let mut out = Array2::zeros((x.nrows(), keep.len()));
        for (k, &j) in keep.iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            for (o, &v) in out.column_mut(k).iter_mut().zip(x.column(j)) {
                *o = (v - m) / s;
            }
        }
        Ok(out)
    }
}

fn is_zero_variance(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(f64::MIN_POSITIVE))
}

/// Centers and scales every column to mean 0 / variance 1 and centers `y`.
/// Zero-variance columns are dropped and recorded.
pub fn standardize(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<(Array2<f64>, Array1<f64>, StandardizationParams), FitError> {
    let n = x.nrows();
    if n != y.len() {
        return Err(FitError::LengthMismatch { x_rows: n, y_len: y.len() });
    }
    if n < 2 {
        return Err(FitError::TooFewRows(n));
    }
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(FitError::NonFinite { row, col });
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteResponse(i));
    }

    let nf = n as f64;
    let means: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / nf).collect();
    let stds: Vec<f64> = x
        .axis_iter(Axis(1))
        .zip(&means)
        .map(|(c, &m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt())
        .collect();
    let dropped: Vec<usize> = (0..means.len()).filter(|&j| is_zero_variance(means[j], stds[j])).collect();
    let y_mean = y.sum() / nf;
    let params = StandardizationParams { means, stds, dropped, y_mean };
    let xs = params.transform(x)?;
    let yc = y.mapv(|v| v - y_mean);
    Ok((xs, yc, params))
}
