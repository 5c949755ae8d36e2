use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::solver::{columns, coordinate_descent, dot};
use super::{FitError, Solution, SolverParams};

/// Shape of a geometric λ grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub n_values: usize,
    /// λ_min / λ_max.
    pub ratio: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self { n_values: 50, ratio: 1e-3 }
    }
}

/// Descending geometric grid from `λ_max = max_j |x_j·yc| / (n·max(α, 0.001))`
/// down to `λ_max · ratio`. A zero response yields `[0]`.
///
/// At `α = 1`, fitting at `λ_max` gives all-zero coefficients.
pub fn lambda_path(xs: ArrayView2<f64>, yc: ArrayView1<f64>, alpha: f64, spec: PathSpec) -> Result<Vec<f64>, FitError> {
    if spec.n_values < 2 || !(spec.ratio > 0.0 && spec.ratio < 1.0) {
        return Err(FitError::BadPathSpec { n_values: spec.n_values, ratio: spec.ratio });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FitError::BadAlpha(alpha));
    }
    let nf = xs.nrows() as f64;
    let y = yc.to_vec();
    // Same dot product and division order as the solver's ρ_j at β = 0.
    let max_corr = columns(xs).iter().map(|c| dot(c, &y).abs() / nf).fold(0.0, f64::max);
    if max_corr == 0.0 {
        return Ok(vec![0.0]);
    }
    let lambda_max = max_corr / alpha.max(0.001);
    let last = (spec.n_values - 1) as f64;
    Ok((0..spec.n_values)
        .map(|k| if k == 0 { lambda_max } else { lambda_max * spec.ratio.powf(k as f64 / last) })
        .collect())
}

/// Fits each λ in order, warm-starting from the previous solution.
pub fn fit_path(
    xs: ArrayView2<f64>,
    yc: ArrayView1<f64>,
    alpha: f64,
    lambdas: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<Solution>, FitError> {
    let mut out: Vec<Solution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let params = SolverParams { alpha, lambda, tol, max_sweeps };
        let warm = out.last().map(|s| s.beta.as_slice());
        out.push(coordinate_descent(xs, yc, &params, warm, false)?);
    }
    Ok(out)
}
