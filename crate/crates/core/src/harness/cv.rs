use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::folds::{derive_seed, kfold_split};
use super::report::FoldChoice;
use super::HarnessError;
use crate::elastic_net::{fit_path, lambda_path, standardize, ElasticNetModel, PathSpec, SolverParams};
use crate::par;

/// Inner-CV search space and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSpec {
    pub alpha_grid: Vec<f64>,
    pub path: PathSpec,
    pub inner_k: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        Self { alpha_grid: vec![0.2, 0.5, 0.8, 1.0], path: PathSpec::default(), inner_k: 5, tol: 1e-6, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub alpha: f64,
    pub lambda: f64,
    /// Mean inner-fold RMSE at the chosen pair.
    pub cv_rmse: f64,
    /// Position of λ on the chosen α's path (0 = head).
    pub lambda_index: usize,
    pub path_len: usize,
    pub converged: bool,
}

fn split_rows(x: ArrayView2<f64>, y: ArrayView1<f64>, rows: &[usize]) -> (Array2<f64>, Array1<f64>) {
    (x.select(Axis(0), rows), y.select(Axis(0), rows))
}

fn fold_rows(row_folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..row_folds.len()).partition(|&i| row_folds[i] != fold)
}

fn check_folds(n: usize, row_folds: &[usize], k: usize) -> Result<(), HarnessError> {
    if row_folds.len() != n {
        return Err(HarnessError::FoldLengthMismatch { expected: n, got: row_folds.len() });
    }
    if k < 2 {
        return Err(HarnessError::BadK(k));
    }
    for fold in 0..k {
        let train = row_folds.iter().filter(|&&f| f != fold).count();
        if train < 2 {
            return Err(HarnessError::TrainingFoldTooSmall { fold, rows: train });
        }
    }
    Ok(())
}

/// Out-of-fold predictions at fixed `(α, λ)`. Each fold's model, standardization
/// included, sees only that fold's training rows. The flag is false if any fold's
/// fit hit the sweep limit.
pub fn cv_predict(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    row_folds: &[usize],
    k: usize,
    params: &SolverParams,
) -> Result<(Vec<f64>, bool), HarnessError> {
    check_folds(x.nrows(), row_folds, k)?;
    let folds: Vec<usize> = (0..k).collect();
    let per_fold = par::try_map(&folds, |&fold| -> Result<_, HarnessError> {
        let (train, test) = fold_rows(row_folds, fold);
        let (xt, yt) = split_rows(x, y, &train);
        let m = ElasticNetModel::fit(xt.view(), yt.view(), params)?;
        let p = m.predict(x.select(Axis(0), &test).view())?;
        Ok((test, p, m.converged))
    })?;
    let mut out = vec![0.0; x.nrows()];
    let mut converged = true;
    for (test, p, c) in per_fold {
        for (i, v) in test.into_iter().zip(p) {
            out[i] = v;
        }
        converged &= c;
    }
    Ok((out, converged))
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Chooses `(α, λ)` minimizing the mean over folds of per-fold RMSE. Each α gets
/// its own λ path, built from all rows given; every fold refits that path with
/// warm starts on its training rows. Ties go to the larger λ, then the larger α.
pub fn select_hyperparameters(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    row_folds: &[usize],
    k: usize,
    spec: &SelectionSpec,
) -> Result<Selection, HarnessError> {
    if spec.alpha_grid.is_empty() {
        return Err(HarnessError::EmptyAlphaGrid);
    }
    check_folds(x.nrows(), row_folds, k)?;
    let (xs, yc, _) = standardize(x, y)?;
    let paths: Vec<Vec<f64>> = spec
        .alpha_grid
        .iter()
        .map(|&a| lambda_path(xs.view(), yc.view(), a, spec.path))
        .collect::<Result<_, _>>()?;

    // One unit of work per (alpha, fold): per-λ RMSE on the held-out rows.
    let units: Vec<(usize, usize)> = (0..spec.alpha_grid.len()).flat_map(|a| (0..k).map(move |f| (a, f))).collect();
    let results = par::try_map(&units, |&(ai, fold)| -> Result<(Vec<f64>, bool), HarnessError> {
        let (train, test) = fold_rows(row_folds, fold);
        let (xt, yt) = split_rows(x, y, &train);
        let (xts, ytc, sp) = standardize(xt.view(), yt.view())?;
        let xv = sp.transform(x.select(Axis(0), &test).view())?;
        let yv = y.select(Axis(0), &test);
        let sols = fit_path(xts.view(), ytc.view(), spec.alpha_grid[ai], &paths[ai], spec.tol, spec.max_sweeps)?;
        let mut converged = true;
        let rmses = sols
            .iter()
            .map(|s| {
                converged &= s.converged;
                let pred = xv.dot(&ArrayView1::from(&s.beta[..])) + sp.y_mean;
                let ss: f64 = yv.iter().zip(pred.iter()).map(|(o, p)| (o - p) * (o - p)).sum();
                (ss / yv.len() as f64).sqrt()
            })
            .collect();
        Ok((rmses, converged))
    })?;

    let mut best: Option<Selection> = None;
    for (ai, &alpha) in spec.alpha_grid.iter().enumerate() {
        let fold_results = &results[ai * k..(ai + 1) * k];
        let converged = fold_results.iter().all(|r| r.1);
        for (li, &lambda) in paths[ai].iter().enumerate() {
            let mean = fold_results.iter().map(|r| r.0[li]).sum::<f64>() / k as f64;
            let cand = Selection { alpha, lambda, cv_rmse: mean, lambda_index: li, path_len: paths[ai].len(), converged };
            best = Some(match best {
                None => cand,
                Some(b) => {
                    let better = if nearly_equal(cand.cv_rmse, b.cv_rmse) {
                        (cand.lambda, cand.alpha) > (b.lambda, b.alpha)
                    } else {
                        cand.cv_rmse < b.cv_rmse
                    };
                    if better {
                        Selection { converged: b.converged && cand.converged, ..cand }
                    } else {
                        Selection { converged: b.converged && cand.converged, ..b }
                    }
                }
            });
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Outcome of nested cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedCv {
    pub predictions: Vec<f64>,
    pub row_folds: Vec<usize>,
    pub fold_choices: Vec<FoldChoice>,
    /// Hyperparameters chosen by inner CV over all rows.
    pub final_choice: Selection,
    pub converged: bool,
}

fn inner_select(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    ids: &[String],
    spec: &SelectionSpec,
    seed: u64,
) -> Result<Selection, HarnessError> {
    let inner = kfold_split(ids, spec.inner_k, seed)?;
    let folds = inner.row_folds(ids).expect("all ids assigned");
    select_hyperparameters(x, y, &folds, spec.inner_k, spec)
}

/// Outer `k`-fold CV where each outer fold tunes `(α, λ)` by inner CV on its own
/// training rows, then fits and predicts its held-out rows.
pub fn nested_cv(
    ids: &[String],
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    k: usize,
    spec: &SelectionSpec,
    seed: u64,
) -> Result<NestedCv, HarnessError> {
    let outer = kfold_split(ids, k, seed)?;
    let row_folds = outer.row_folds(ids).expect("all ids assigned");
    check_folds(x.nrows(), &row_folds, k)?;
    let folds: Vec<usize> = (0..k).collect();
    let per_fold = par::try_map(&folds, |&fold| -> Result<_, HarnessError> {
        let (train, test) = fold_rows(&row_folds, fold);
        let (xt, yt) = split_rows(x, y, &train);
        let train_ids: Vec<String> = train.iter().map(|&i| ids[i].clone()).collect();
        let sel = inner_select(xt.view(), yt.view(), &train_ids, spec, derive_seed(seed, fold as u64 + 1))?;
        let params = SolverParams { alpha: sel.alpha, lambda: sel.lambda, tol: spec.tol, max_sweeps: spec.max_sweeps };
        let m = ElasticNetModel::fit(xt.view(), yt.view(), &params)?;
        let p = m.predict(x.select(Axis(0), &test).view())?;
        let choice = FoldChoice {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            alpha: sel.alpha,
            lambda: sel.lambda,
            n_active: m.n_active(),
            converged: m.converged && sel.converged,
        };
        Ok((test, p, choice))
    })?;
    let final_choice = inner_select(x, y, ids, spec, derive_seed(seed, 0))?;
    let mut predictions = vec![0.0; x.nrows()];
    let mut fold_choices = Vec::with_capacity(k);
    for (test, p, choice) in per_fold {
        for (i, v) in test.into_iter().zip(p) {
            predictions[i] = v;
        }
        fold_choices.push(choice);
    }
    let converged = final_choice.converged && fold_choices.iter().all(|c| c.converged);
    Ok(NestedCv { predictions, row_folds, fold_choices, final_choice, converged })
}
