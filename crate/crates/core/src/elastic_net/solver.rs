use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::FitError;

/// `sign(z) · max(|z| − γ, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// L1 share of the penalty, in [0, 1].
    pub alpha: f64,
    pub lambda: f64,
    /// Stop once the largest coefficient change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl SolverParams {
    pub fn new(alpha: f64, lambda: f64) -> Self {
        Self { alpha, lambda, tol: 1e-6, max_sweeps: 10_000 }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FitError::BadAlpha(self.alpha));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(FitError::BadLambda(self.lambda));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    /// Objective after each sweep, when tracing was requested.
    pub objective_trace: Option<Vec<f64>>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn columns(xs: ArrayView2<f64>) -> Vec<Vec<f64>> {
    xs.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// Objective value at `beta`.
pub fn objective(xs: ArrayView2<f64>, yc: ArrayView1<f64>, beta: &[f64], alpha: f64, lambda: f64) -> f64 {
    let n = xs.nrows() as f64;
    let fitted = xs.dot(&ArrayView1::from(beta));
    let rss: f64 = yc.iter().zip(fitted.iter()).map(|(y, f)| (y - f) * (y - f)).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    rss / (2.0 * n) + lambda * (alpha * l1 + (1.0 - alpha) * l2 / 2.0)
}

/// Per-coordinate violation of the optimality conditions at `beta`:
/// `max(|g_j| − λα, 0)` where `β_j = 0`, and `|g_j − λα·sign(β_j)|` otherwise,
/// with `g_j = (1/n)·x_j·r − λ(1−α)β_j`.
pub fn kkt_violations(xs: ArrayView2<f64>, yc: ArrayView1<f64>, beta: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
    let n = xs.nrows() as f64;
    let fitted = xs.dot(&ArrayView1::from(beta));
    let r: Vec<f64> = yc.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let (l1, l2) = (lambda * alpha, lambda * (1.0 - alpha));
    xs.columns()
        .into_iter()
        .zip(beta)
        .map(|(col, &b)| {
            let g = col.iter().zip(&r).map(|(x, r)| x * r).sum::<f64>() / n - l2 * b;
            if b == 0.0 {
                (g.abs() - l1).max(0.0)
            } else {
                (g - l1 * b.signum()).abs()
            }
        })
        .collect()
}

/// Cyclic coordinate descent on standardized `xs` and centered `yc`.
///
/// Each sweep updates every coordinate in column order with
/// `β_j ← S(ρ_j, λα) / (c_j + λ(1−α))`, `ρ_j = (1/n)·x_j·r + c_j β_j`, where
/// `c_j = (1/n)‖x_j‖²` (1 for standardized columns). A run that exhausts
/// `max_sweeps` returns with `converged = false`.
pub fn coordinate_descent(
    xs: ArrayView2<f64>,
    yc: ArrayView1<f64>,
    params: &SolverParams,
    warm_start: Option<&[f64]>,
    trace: bool,
) -> Result<Solution, FitError> {
    params.validate()?;
    let (n, p) = xs.dim();
    if yc.len() != n {
        return Err(FitError::LengthMismatch { x_rows: n, y_len: yc.len() });
    }
    let nf = n as f64;
    let cols = columns(xs);
    let scale: Vec<f64> = cols.iter().map(|c| dot(c, c) / nf).collect();
    let mut beta = match warm_start {
        Some(w) if w.len() != p => return Err(FitError::WarmStartMismatch { expected: p, got: w.len() }),
        Some(w) => w.to_vec(),
        None => vec![0.0; p],
    };
    let mut r: Vec<f64> = yc.to_vec();
    for (col, &b) in cols.iter().zip(&beta) {
        if b != 0.0 {
            r.iter_mut().zip(col).for_each(|(ri, xi)| *ri -= xi * b);
        }
    }

    let l1 = params.lambda * params.alpha;
    let l2 = params.lambda * (1.0 - params.alpha);
    let mut trace_vals = trace.then(Vec::new);
    let mut n_iter = 0;
    let mut converged = p == 0;
    while !converged && n_iter < params.max_sweeps {
        n_iter += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let old = beta[j];
            let denom = scale[j] + l2;
            let new = if denom > 0.0 {
                let rho = dot(&cols[j], &r) / nf + scale[j] * old;
                soft_threshold(rho, l1) / denom
            } else {
                0.0
            };
            if new != old {
                let d = new - old;
                r.iter_mut().zip(&cols[j]).for_each(|(ri, xi)| *ri -= xi * d);
                max_delta = max_delta.max(d.abs());
                beta[j] = new;
            }
        }
        if let Some(t) = trace_vals.as_mut() {
            t.push(objective(xs, yc, &beta, params.alpha, params.lambda));
        }
        converged = max_delta < params.tol;
    }
    Ok(Solution { beta, n_iter, converged, objective_trace: trace_vals })
}
