use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{coordinate_descent, standardize, FitError, SolverParams, StandardizationParams};

const FORMAT_TAG: &str = "elastic-net-model v1";

/// A fitted elastic-net model. `beta` lives in standardized space and has one
/// entry per retained feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub alpha: f64,
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub std_params: StandardizationParams,
    pub n_iter: usize,
    pub converged: bool,
}

impl ElasticNetModel {
    /// Fits on already-standardized data; the intercept is `std_params.y_mean`.
    pub fn fit_standardized(
        xs: ArrayView2<f64>,
        yc: ArrayView1<f64>,
        std_params: StandardizationParams,
        params: &SolverParams,
        warm_start: Option<&[f64]>,
    ) -> Result<Self, FitError> {
        let s = coordinate_descent(xs, yc, params, warm_start, false)?;
        Ok(Self {
            alpha: params.alpha,
            lambda: params.lambda,
            beta: s.beta,
            intercept: std_params.y_mean,
            std_params,
            n_iter: s.n_iter,
            converged: s.converged,
        })
    }

    /// Standardizes raw `x`/`y` and fits.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &SolverParams) -> Result<Self, FitError> {
        let (xs, yc, sp) = standardize(x, y)?;
        Self::fit_standardized(xs.view(), yc.view(), sp, params, None)
    }

    pub fn n_features(&self) -> usize {
        self.std_params.n_features()
    }

    /// Number of non-zero coefficients.
    pub fn n_active(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, FitError> {
        let xs = self.std_params.transform(x)?;
        Ok(xs.dot(&ArrayView1::from(&self.beta[..])) + self.intercept)
    }

    /// Coefficients on the raw feature scale, zero for dropped columns.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features()];
        for (b, j) in self.beta.iter().zip(self.std_params.retained()) {
            out[j] = b / self.std_params.stds[j];
        }
        out
    }

    /// Self-describing text with floats at 17 significant digits.
    pub fn to_text(&self) -> String {
        fn floats(v: &[f64]) -> String {
            v.iter().map(|x| format!(" {x:.16e}")).collect()
        }
        let sp = &self.std_params;
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(s, "alpha {:.16e}", self.alpha);
        let _ = writeln!(s, "lambda {:.16e}", self.lambda);
        let _ = writeln!(s, "y_mean {:.16e}", sp.y_mean);
        let _ = writeln!(s, "intercept {:.16e}", self.intercept);
        let _ = writeln!(s, "n_features {}", sp.n_features());
        let _ = writeln!(s, "means{}", floats(&sp.means));
        let _ = writeln!(s, "stds{}", floats(&sp.stds));
        let dropped: String = sp.dropped.iter().map(|d| format!(" {d}")).collect();
        let _ = writeln!(s, "dropped{dropped}");
        let _ = writeln!(s, "beta{}", floats(&self.beta));
        let _ = writeln!(s, "n_iter {}", self.n_iter);
        let _ = writeln!(s, "converged {}", self.converged);
        s
    }

    pub fn from_text(text: &str) -> Result<Self, FitError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, reason: String| FitError::Parse { line: line + 1, reason };
        match lines.next() {
            Some((_, l)) if l.trim() == FORMAT_TAG => {}
            Some((i, l)) => return Err(err(i, format!("expected header {FORMAT_TAG:?}, found {l:?}"))),
            None => return Err(err(0, "empty model file".into())),
        }
        let mut next = |key: &str| -> Result<(usize, Vec<String>), FitError> {
            let (i, l) = lines.next().ok_or_else(|| err(usize::MAX - 1, format!("missing {key}")))?;
            let mut it = l.split_whitespace();
            match it.next() {
                Some(k) if k == key => Ok((i, it.map(str::to_string).collect())),
                _ => Err(err(i, format!("expected {key}"))),
            }
        };
        fn parse<T: std::str::FromStr>(i: usize, v: &[String]) -> Result<Vec<T>, FitError> {
            v.iter()
                .map(|s| s.parse().map_err(|_| FitError::Parse { line: i + 1, reason: format!("bad value {s:?}") }))
                .collect()
        }
        fn scalar<T: std::str::FromStr>(i: usize, v: &[String]) -> Result<T, FitError> {
            let mut p = parse::<T>(i, v)?;
            if p.len() != 1 {
                return Err(FitError::Parse { line: i + 1, reason: "expected one value".into() });
            }
            Ok(p.remove(0))
        }
        let (i, v) = next("alpha")?;
        let alpha: f64 = scalar(i, &v)?;
        let (i, v) = next("lambda")?;
        let lambda: f64 = scalar(i, &v)?;
        let (i, v) = next("y_mean")?;
        let y_mean: f64 = scalar(i, &v)?;
        let (i, v) = next("intercept")?;
        let intercept: f64 = scalar(i, &v)?;
        let (i, v) = next("n_features")?;
        let n_features: usize = scalar(i, &v)?;
        let (i, v) = next("means")?;
        let means: Vec<f64> = parse(i, &v)?;
        if means.len() != n_features {
            return Err(err(i, format!("{} means for {n_features} features", means.len())));
        }
        let (i, v) = next("stds")?;
        let stds: Vec<f64> = parse(i, &v)?;
        if stds.len() != n_features {
            return Err(err(i, format!("{} stds for {n_features} features", stds.len())));
        }
        let (i, v) = next("dropped")?;
        let dropped: Vec<usize> = parse(i, &v)?;
        if dropped.windows(2).any(|w| w[0] >= w[1]) || dropped.iter().any(|&d| d >= n_features) {
            return Err(err(i, "dropped indices must be ascending and in range".into()));
        }
        let (i, v) = next("beta")?;
        let beta: Vec<f64> = parse(i, &v)?;
        if beta.len() != n_features - dropped.len() {
            return Err(err(i, format!("{} coefficients for {} retained features", beta.len(), n_features - dropped.len())));
        }
        let (i, v) = next("n_iter")?;
        let n_iter: usize = scalar(i, &v)?;
        let (i, v) = next("converged")?;
        let converged: bool = scalar(i, &v)?;
        let model = Self {
            alpha,
            lambda,
            beta,
            intercept,
            std_params: StandardizationParams { means, stds, dropped, y_mean },
            n_iter,
            converged,
        };
        SolverParams::new(alpha, lambda).validate()?;
        Ok(model)
    }
}
