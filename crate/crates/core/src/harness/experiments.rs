use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::cv::{nested_cv, select_hyperparameters, SelectionSpec};
use super::folds::{derive_seed, kfold_split};
use super::metrics::pearson;
use super::report::{EvalReport, EvalRow, Hyperparameters, Metrics, R2_DEFINITION};
use super::split::{split_by_crime_level, SplitRule, StratifiedSplit};
use super::HarnessError;
use crate::elastic_net::{ElasticNetModel, SolverParams};
use crate::features::FeatureMatrix;
use crate::ingest::{RateCategory, SocioProfile, TractStats, SOCIO_VARIABLES};

/// Which per-city experiments to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Every non-excluded tract.
    All,
    /// Tracts outside the high-crime split.
    LowMedian,
    /// High-crime tracts of one city alone.
    High,
    /// Socioeconomic variables instead of image features.
    Socio,
    /// High-crime tracts of all cities in one model.
    PooledHigh,
    /// Fit on one city, predict each other.
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub k: usize,
    #[serde(flatten)]
    pub selection: SelectionSpec,
    pub split_rule: SplitRule,
    pub categories: Vec<RateCategory>,
    pub experiments: Vec<ExperimentKind>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 2016,
            k: 5,
            selection: SelectionSpec::default(),
            split_rule: SplitRule::Tukey,
            categories: RateCategory::ALL.to_vec(),
            experiments: vec![
                ExperimentKind::All,
                ExperimentKind::LowMedian,
                ExperimentKind::High,
                ExperimentKind::Socio,
                ExperimentKind::PooledHigh,
                ExperimentKind::Transfer,
            ],
        }
    }
}

impl HarnessConfig {
    pub fn wants(&self, kind: ExperimentKind) -> bool {
        self.experiments.contains(&kind)
    }
}

/// One city's modeling inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CityData {
    pub name: String,
    pub features: FeatureMatrix,
    pub stats: Vec<TractStats>,
    pub socio: Vec<SocioProfile>,
}

impl CityData {
    /// Non-excluded tracts with a feature row, sorted by id, and their rates.
    pub fn targets(&self, category: RateCategory) -> BTreeMap<String, f64> {
        let have: std::collections::HashSet<&str> = self.features.tract_ids.iter().map(String::as_str).collect();
        self.stats
            .iter()
            .filter(|s| have.contains(s.tract_id.as_str()))
            .filter_map(|s| s.rate(category).map(|r| (s.tract_id.clone(), r)))
            .collect()
    }

    /// Non-excluded tracts that have no feature row.
    pub fn rated_without_features(&self) -> Vec<String> {
        let have: std::collections::HashSet<&str> = self.features.tract_ids.iter().map(String::as_str).collect();
        self.stats
            .iter()
            .filter(|s| !s.is_excluded() && !have.contains(s.tract_id.as_str()))
            .map(|s| s.tract_id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub experiment_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CityRun {
    pub reports: Vec<EvalReport>,
    pub skipped: Vec<Skipped>,
    pub splits: BTreeMap<RateCategory, StratifiedSplit>,
}

struct Design<'a> {
    city: &'a str,
    category: RateCategory,
    split: &'a str,
    provenance: String,
}

fn evaluate(
    design: Design<'_>,
    ids: Vec<String>,
    x: Array2<f64>,
    y: Array1<f64>,
    labels: &dyn Fn(&str) -> String,
    cfg: &HarnessConfig,
    notes: Vec<String>,
) -> Result<EvalReport, HarnessError> {
    let nested = nested_cv(&ids, x.view(), y.view(), cfg.k, &cfg.selection, cfg.seed)?;
    let mut rows: Vec<EvalRow> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| EvalRow {
            tract_id: id.clone(),
            observed: y[i],
            predicted: nested.predictions[i],
            fold: Some(nested.row_folds[i]),
            split_label: labels(id),
        })
        .collect();
    rows.sort_by(|a, b| a.tract_id.cmp(&b.tract_id));
    Ok(EvalReport {
        experiment_id: format!("{}/{}/{}", design.city, design.category.as_str(), design.split),
        city: design.city.to_string(),
        category: design.category.as_str().to_string(),
        split: design.split.to_string(),
        metrics: Metrics::from_rows(&rows)?,
        rows,
        r_squared_definition: R2_DEFINITION.to_string(),
        hyperparameters: Hyperparameters { alpha: nested.final_choice.alpha, lambda: nested.final_choice.lambda },
        fold_choices: nested.fold_choices,
        provenance: design.provenance,
        seed: cfg.seed,
        k: cfg.k,
        converged: nested.converged,
        notes,
    })
}

fn rows_for(m: &FeatureMatrix, ids: &[String]) -> Result<Array2<f64>, HarnessError> {
    m.select(ids).ok_or_else(|| HarnessError::Data("feature matrix is missing a requested tract".into()))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Errors that only mean a subset is too small for nested CV.
fn too_small(e: &HarnessError) -> bool {
    matches!(e, HarnessError::TooFewTracts { .. } | HarnessError::TrainingFoldTooSmall { .. } | HarnessError::BadK(_))
}

/// Per-category all-tracts, low/median-only and high-only image-feature models
/// for one city, as configured. Subsets too small for nested CV are skipped with
/// a reason; the all-tracts model propagates every error.
pub fn run_city_experiment(city: &CityData, cfg: &HarnessConfig) -> Result<CityRun, HarnessError> {
    let mut run = CityRun::default();
    let missing = city.rated_without_features();
    let base_notes: Vec<String> = if missing.is_empty() {
        vec![]
    } else {
        vec![format!("{} rated tracts have no feature row and are not modeled", missing.len())]
    };
    for &category in &cfg.categories {
        let targets = city.targets(category);
        let id_of = |split: &str| format!("{}/{}/{}", city.name, category.as_str(), split);
        let ids: Vec<String> = targets.keys().cloned().collect();
        let y: Vec<f64> = targets.values().copied().collect();
        if ids.len() < cfg.k {
            return Err(HarnessError::TooFewTracts { n: ids.len(), k: cfg.k });
        }
        if is_constant(&y) {
            for split in ["all", "low_median", "high"] {
                run.skipped.push(Skipped {
                    experiment_id: id_of(split),
                    reason: format!("{} rates are identical in every tract", category.as_str()),
                });
            }
            continue;
        }
        let split = split_by_crime_level(&targets, cfg.split_rule);
        let label = |id: &str| split.label(id).to_string();
        let design = |s| Design { city: &city.name, category, split: s, provenance: city.features.provenance.to_string() };

        if cfg.wants(ExperimentKind::All) {
            let x = rows_for(&city.features, &ids)?;
            let mut notes = base_notes.clone();
            notes.push(format!("split rule {} threshold {}", split.rule, split.threshold));
            let r = evaluate(design("all"), ids.clone(), x, Array1::from(y.clone()), &label, cfg, notes)?;
            run.reports.push(r);
        }
        for (kind, name, subset) in [
            (ExperimentKind::LowMedian, "low_median", &split.low_median),
            (ExperimentKind::High, "high", &split.high),
        ] {
            if !cfg.wants(kind) {
                continue;
            }
            let sub_y: Vec<f64> = subset.iter().map(|id| targets[id]).collect();
            if subset.is_empty() || is_constant(&sub_y) {
                run.skipped.push(Skipped {
                    experiment_id: id_of(name),
                    reason: if subset.is_empty() {
                        format!("{name} split is empty")
                    } else {
                        format!("{name} split has {} tracts with no rate variation", subset.len())
                    },
                });
                continue;
            }
            let x = rows_for(&city.features, subset)?;
            match evaluate(design(name), subset.clone(), x, Array1::from(sub_y), &label, cfg, base_notes.clone()) {
                Ok(r) => run.reports.push(r),
                Err(e) if too_small(&e) => run.skipped.push(Skipped {
                    experiment_id: id_of(name),
                    reason: format!("{name} split has {} tracts: {e}", subset.len()),
                }),
                Err(e) => return Err(e),
            }
        }
        run.splits.insert(category, split);
    }
    Ok(run)
}

fn check_layouts(a: &CityData, b: &CityData) -> Result<(), HarnessError> {
    if a.features.feature_names != b.features.feature_names || a.features.provenance != b.features.provenance {
        return Err(HarnessError::LayoutMismatch(format!(
            "{} has {} features ({}), {} has {} ({})",
            a.name,
            a.features.n_features(),
            a.features.provenance,
            b.name,
            b.features.n_features(),
            b.features.provenance
        )));
    }
    Ok(())
}

/// One nested-CV model over the high-crime tracts of every city. Tract ids are
/// prefixed `city:` to keep them unique.
pub fn run_pooled_high_model(
    cities: &[CityData],
    category: RateCategory,
    cfg: &HarnessConfig,
) -> Result<EvalReport, HarnessError> {
    for w in cities.windows(2) {
        check_layouts(&w[0], &w[1])?;
    }
    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut blocks = Vec::new();
    let mut membership = Vec::new();
    for c in cities {
        let targets = c.targets(category);
        let split = split_by_crime_level(&targets, cfg.split_rule);
        if split.high.is_empty() {
            continue;
        }
        membership.push(format!("{}={}", c.name, split.high.len()));
        blocks.push(rows_for(&c.features, &split.high)?);
        for id in &split.high {
            ids.push(format!("{}:{id}", c.name));
            y.push(targets[id]);
        }
    }
    if membership.len() < 2 {
        return Err(HarnessError::TooFewCities(membership.len()));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let x = ndarray::concatenate(ndarray::Axis(0), &views).expect("shared layout");
    let design = Design { city: "pooled", category, split: "high", provenance: cities[0].features.provenance.to_string() };
    let notes = vec![format!("high-crime tracts per city: {}", membership.join(", "))];
    evaluate(design, ids, x, Array1::from(y), &|_| "high".to_string(), cfg, notes)
}

/// Fits on every rated tract of `train` (hyperparameters from inner CV there) and
/// scores predictions for every rated tract of `test`.
pub fn cross_city_transfer(
    train: &CityData,
    test: &CityData,
    category: RateCategory,
    cfg: &HarnessConfig,
) -> Result<EvalReport, HarnessError> {
    check_layouts(train, test)?;
    let tr = train.targets(category);
    let te = test.targets(category);
    let tr_ids: Vec<String> = tr.keys().cloned().collect();
    let te_ids: Vec<String> = te.keys().cloned().collect();
    if te_ids.len() < 2 {
        return Err(HarnessError::TooFewTracts { n: te_ids.len(), k: 2 });
    }
    let x = rows_for(&train.features, &tr_ids)?;
    let y = Array1::from(tr.values().copied().collect::<Vec<_>>());
    let inner = kfold_split(&tr_ids, cfg.selection.inner_k, derive_seed(cfg.seed, 0))?;
    let folds = inner.row_folds(&tr_ids).expect("all ids assigned");
    let sel = select_hyperparameters(x.view(), y.view(), &folds, cfg.selection.inner_k, &cfg.selection)?;
    let params = SolverParams { alpha: sel.alpha, lambda: sel.lambda, tol: cfg.selection.tol, max_sweeps: cfg.selection.max_sweeps };
    let model = ElasticNetModel::fit(x.view(), y.view(), &params)?;
    let pred = model.predict(rows_for(&test.features, &te_ids)?.view())?;
    let rows: Vec<EvalRow> = te_ids
        .iter()
        .zip(pred.iter())
        .map(|(id, &p)| EvalRow { tract_id: id.clone(), observed: te[id], predicted: p, fold: None, split_label: "all".into() })
        .collect();
    Ok(EvalReport {
        experiment_id: format!("transfer/{}->{}/{}", train.name, test.name, category.as_str()),
        city: test.name.clone(),
        category: category.as_str().to_string(),
        split: "transfer".into(),
        metrics: Metrics::from_rows(&rows)?,
        rows,
        r_squared_definition: "1 - SS_res/SS_tot on test-city predictions from a model fit on the training city".into(),
        hyperparameters: Hyperparameters { alpha: sel.alpha, lambda: sel.lambda },
        fold_choices: vec![],
        provenance: train.features.provenance.to_string(),
        seed: cfg.seed,
        k: cfg.k,
        converged: model.converged && sel.converged,
        notes: vec![format!("trained on {} ({} tracts)", train.name, tr_ids.len())],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonRow {
    pub variable: String,
    pub category: String,
    pub n: usize,
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SocioRun {
    pub reports: Vec<EvalReport>,
    pub pearson: Vec<PearsonRow>,
    pub skipped: Vec<Skipped>,
}

/// Socioeconomic-variable models under the same nested-CV protocol, plus the
/// Pearson correlation of every variable with every category's rates.
pub fn socio_baseline(
    city: &str,
    profiles: &[SocioProfile],
    stats: &[TractStats],
    cfg: &HarnessConfig,
) -> Result<SocioRun, HarnessError> {
    let by_id: HashMap<&str, &SocioProfile> = profiles.iter().map(|p| (p.tract_id.as_str(), p)).collect();
    let mut run = SocioRun::default();
    for &category in &cfg.categories {
        let targets: BTreeMap<String, f64> = stats
            .iter()
            .filter(|s| by_id.contains_key(s.tract_id.as_str()))
            .filter_map(|s| s.rate(category).map(|r| (s.tract_id.clone(), r)))
            .collect();
        let ids: Vec<String> = targets.keys().cloned().collect();
        let y: Vec<f64> = targets.values().copied().collect();
        let mut x = Array2::zeros((ids.len(), SOCIO_VARIABLES.len()));
        for (i, id) in ids.iter().enumerate() {
            for (j, v) in by_id[id.as_str()].values().into_iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        for (j, var) in SOCIO_VARIABLES.iter().enumerate() {
            let col: Vec<f64> = x.column(j).to_vec();
            let (rho, note) = match pearson(&col, &y) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            run.pearson.push(PearsonRow { variable: var.to_string(), category: category.as_str().into(), n: ids.len(), rho, note });
        }
        let experiment_id = format!("{city}/{}/socio", category.as_str());
        if y.len() < 2 || is_constant(&y) {
            run.skipped.push(Skipped { experiment_id, reason: format!("{} rates do not vary", category.as_str()) });
            continue;
        }
        let design = Design { city, category, split: "socio", provenance: "socio".into() };
        match evaluate(design, ids, x, Array1::from(y), &|_| "all".to_string(), cfg, vec![]) {
            Ok(r) => run.reports.push(r),
            Err(e) if too_small(&e) => run.skipped.push(Skipped { experiment_id, reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}
