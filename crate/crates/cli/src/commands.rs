use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tractlens_core::features::export_finetune_labels;
use tractlens_core::geo::fetch::{fetch_tiles, FetchConfig, FetchStatus};
use tractlens_core::geo::{TileCoord, TractBoundary};
use tractlens_core::harness::{
    cross_city_transfer, run_city_experiment, run_pooled_high_model, socio_baseline, EvalReport, ExperimentKind,
    HarnessConfig, HarnessError, PearsonRow, Skipped,
};
use tractlens_core::ingest::RateCategory;
use tractlens_core::output::{emit_choropleth, emit_predictions_csv, render_summary_csv, render_summary_table, summary_rows};
use tractlens_core::synth::{generate_city, SyntheticCitySpec};

use crate::cache::{read_file, write_file};
use crate::config::{FeatureSource, PipelineConfig};
use crate::pipeline::{CityStages, LoadedCity};
use crate::CliError;

/// Name of the pooled multi-city pseudo-city in experiment ids.
pub const POOLED: &str = "pooled";

/// Report file stem: `a/b->c/d` becomes `a__b-to-c__d`.
pub fn artifact_stem(experiment_id: &str) -> String {
    experiment_id.replace("->", "-to-").replace('/', "__")
}

fn harness_err(stage: &str, e: HarnessError) -> CliError {
    CliError::Data { stage: stage.to_string(), message: e.to_string() }
}

/// Subsets too small to evaluate are skipped rather than fatal.
fn skippable(e: &HarnessError) -> bool {
    matches!(e, HarnessError::TooFewTracts { .. } | HarnessError::TrainingFoldTooSmall { .. } | HarnessError::TooFewCities(_))
}

#[derive(Default)]
pub struct RunOutcome {
    pub reports: Vec<EvalReport>,
    pub skipped: Vec<Skipped>,
    pub pearson: Vec<PearsonRow>,
}

pub fn load_cities(cfg: &PipelineConfig, only: Option<&str>) -> Result<Vec<LoadedCity>, CliError> {
    cfg.city(only)?.into_iter().map(|c| CityStages::new(cfg, c).load()).collect()
}

fn run_transfers(cities: &[LoadedCity], h: &HarnessConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    for a in cities {
        for b in cities {
            if a.data.name == b.data.name {
                continue;
            }
            for &cat in &h.categories {
                match cross_city_transfer(&a.data, &b.data, cat, h) {
                    Ok(r) => out.reports.push(r),
                    Err(e) if skippable(&e) => out.skipped.push(Skipped {
                        experiment_id: format!("transfer/{}->{}/{}", a.data.name, b.data.name, cat.as_str()),
                        reason: e.to_string(),
                    }),
                    Err(e) => return Err(harness_err("transfer", e)),
                }
            }
        }
    }
    Ok(())
}

/// All configured experiments over already-loaded cities.
pub fn run_experiments(cities: &[LoadedCity], h: &HarnessConfig) -> Result<RunOutcome, CliError> {
    let mut out = RunOutcome::default();
    for c in cities {
        let run = run_city_experiment(&c.data, h).map_err(|e| harness_err(&format!("{}/experiments", c.data.name), e))?;
        out.reports.extend(run.reports);
        out.skipped.extend(run.skipped);
        if h.wants(ExperimentKind::Socio) {
            let s = socio_baseline(&c.data.name, &c.data.socio, &c.data.stats, h)
                .map_err(|e| harness_err(&format!("{}/socio", c.data.name), e))?;
            out.reports.extend(s.reports);
            out.pearson.extend(s.pearson);
            out.skipped.extend(s.skipped);
        }
    }
    let multi = [(ExperimentKind::PooledHigh, "pooled high-crime model"), (ExperimentKind::Transfer, "transfer")];
    if cities.len() < 2 {
        for (kind, what) in multi {
            if h.wants(kind) {
                out.skipped.push(Skipped { experiment_id: what.into(), reason: "needs at least two cities".into() });
            }
        }
        return Ok(out);
    }
    if h.wants(ExperimentKind::PooledHigh) {
        let data: Vec<_> = cities.iter().map(|c| c.data.clone()).collect();
        for &cat in &h.categories {
            match run_pooled_high_model(&data, cat, h) {
                Ok(r) => out.reports.push(r),
                Err(e) if skippable(&e) => out
                    .skipped
                    .push(Skipped { experiment_id: format!("{POOLED}/{}/high", cat.as_str()), reason: e.to_string() }),
                Err(e) => return Err(harness_err("pooled", e)),
            }
        }
    }
    if h.wants(ExperimentKind::Transfer) {
        run_transfers(cities, h, &mut out)?;
    }
    Ok(out)
}

fn check_convergence(reports: &[EvalReport], strict: bool) -> Result<(), CliError> {
    let bad: Vec<&str> = reports.iter().filter(|r| !r.converged).map(|r| r.experiment_id.as_str()).collect();
    if bad.is_empty() {
        return Ok(());
    }
    if strict {
        return Err(CliError::NonConvergence(bad.join(", ")));
    }
    eprintln!("warning: solver hit the sweep limit in {}", bad.join(", "));
    Ok(())
}

/// Boundaries and exclusions a report's choropleth is drawn from.
fn map_layer(report: &EvalReport, cities: &[LoadedCity]) -> Option<(Vec<TractBoundary>, BTreeMap<String, String>)> {
    if report.city == POOLED {
        let mut b = Vec::new();
        let mut ex = BTreeMap::new();
        for c in cities {
            for t in &c.boundaries {
                let mut t = t.clone();
                t.tract_id = format!("{}:{}", c.data.name, t.tract_id);
                b.push(t);
            }
            for (id, why) in &c.excluded {
                ex.insert(format!("{}:{id}", c.data.name), why.clone());
            }
        }
        return Some((b, ex));
    }
    cities.iter().find(|c| c.data.name == report.city).map(|c| (c.boundaries.clone(), c.excluded.clone()))
}

/// Writes one report's JSON, predictions CSV and choropleth.
pub fn write_report_artifacts(out_dir: &Path, report: &EvalReport, cities: &[LoadedCity]) -> Result<(), CliError> {
    let stem = artifact_stem(&report.experiment_id);
    write_file(&out_dir.join("reports").join(format!("{stem}.json")), report.to_json().as_bytes())?;
    write_file(&out_dir.join("predictions").join(format!("{stem}.csv")), emit_predictions_csv(report).as_bytes())?;
    if let Some((boundaries, excluded)) = map_layer(report, cities) {
        let geo = emit_choropleth(&boundaries, report, &excluded)
            .map_err(|e| CliError::Data { stage: "choropleth".into(), message: e.to_string() })?;
        write_file(&out_dir.join("choropleths").join(format!("{stem}.geojson")), geo.as_bytes())?;
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Writes summary.txt and summary.csv; returns the table text.
pub fn write_summary(out_dir: &Path, reports: &[EvalReport]) -> Result<String, CliError> {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.experiment_id.cmp(&b.experiment_id));
    let owned: Vec<EvalReport> = sorted.into_iter().cloned().collect();
    let rows = summary_rows(&owned);
    let table = render_summary_table(&rows);
    write_file(&out_dir.join("summary.txt"), table.as_bytes())?;
    write_file(&out_dir.join("summary.csv"), render_summary_csv(&rows).as_bytes())?;
    Ok(table)
}

fn clear_dir(p: &Path) -> Result<(), CliError> {
    match std::fs::remove_dir_all(p) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::Io { path: p.to_path_buf(), source: e }),
        _ => Ok(()),
    }
}

pub fn cmd_run(cfg: &PipelineConfig, only: Option<&str>, strict: bool) -> Result<String, CliError> {
    let cities = load_cities(cfg, only)?;
    let outcome = run_experiments(&cities, &cfg.harness)?;
    check_convergence(&outcome.reports, strict)?;
    let out = &cfg.output_dir;
    // Everything is computed before anything is written; earlier artifacts go first.
    for d in ["reports", "predictions", "choropleths"] {
        clear_dir(&out.join(d))?;
    }
    for r in &outcome.reports {
        write_report_artifacts(out, r, &cities)?;
    }
    let pearson = csv_text(
        &["variable", "category", "n", "rho", "note"],
        outcome.pearson.iter().map(|p| {
            vec![
                p.variable.clone(),
                p.category.clone(),
                p.n.to_string(),
                p.rho.map(|v| v.to_string()).unwrap_or_default(),
                p.note.clone().unwrap_or_default(),
            ]
        }),
    );
    write_file(&out.join("pearson.csv"), pearson.as_bytes())?;
    let skipped = csv_text(
        &["experiment_id", "reason"],
        outcome.skipped.iter().map(|s| vec![s.experiment_id.clone(), s.reason.clone()]),
    );
    write_file(&out.join("skipped.csv"), skipped.as_bytes())?;
    for s in &outcome.skipped {
        eprintln!("skipped {}: {}", s.experiment_id, s.reason);
    }
    write_summary(out, &outcome.reports)
}

pub fn cmd_transfer(cfg: &PipelineConfig, train: &str, test: &str, strict: bool) -> Result<String, CliError> {
    if train == test {
        return Err(CliError::Config("--train and --test must name different cities".into()));
    }
    let mut cities = load_cities(cfg, Some(train))?;
    cities.extend(load_cities(cfg, Some(test))?);
    let mut out = RunOutcome::default();
    for &cat in &cfg.harness.categories {
        let r = cross_city_transfer(&cities[0].data, &cities[1].data, cat, &cfg.harness)
            .map_err(|e| harness_err("transfer", e))?;
        out.reports.push(r);
    }
    check_convergence(&out.reports, strict)?;
    for r in &out.reports {
        write_report_artifacts(&cfg.output_dir, r, &cities)?;
    }
    let rows = summary_rows(&out.reports);
    Ok(render_summary_table(&rows))
}

/// Summary over every report JSON under `<output_dir>/reports`.
pub fn cmd_report(reports_dir: &Path, out_dir: &Path) -> Result<String, CliError> {
    let entries = std::fs::read_dir(reports_dir)
        .map_err(|e| CliError::Config(format!("cannot read reports directory {}: {e}", reports_dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data { stage: "report".into(), message: format!("no reports in {}", reports_dir.display()) });
    }
    let mut reports = Vec::new();
    for p in paths {
        let r = EvalReport::from_json(&read_file(&p)?)
            .map_err(|e| CliError::Data { stage: "report".into(), message: format!("{}: {e}", p.display()) })?;
        reports.push(r);
    }
    write_summary(out_dir, &reports)
}

pub fn cmd_rates(cfg: &PipelineConfig, only: Option<&str>) -> Result<String, CliError> {
    let mut msg = String::new();
    for c in cfg.city(only)? {
        let mut st = CityStages::new(cfg, c);
        let b = st.boundaries()?;
        let (stats, _) = st.rates(&b)?;
        let excluded = stats.iter().filter(|s| s.is_excluded()).count();
        msg.push_str(&format!(
            "{}: {} tracts, {} excluded -> {}\n",
            c.name,
            stats.len(),
            excluded,
            st.cache.path("tract_stats.csv").display()
        ));
    }
    Ok(msg)
}

pub fn cmd_tiles(cfg: &PipelineConfig, only: Option<&str>) -> Result<String, CliError> {
    let mut msg = String::new();
    for c in cfg.city(only)? {
        let mut st = CityStages::new(cfg, c);
        let b = st.boundaries()?;
        let (map, _) = st.tiles(&b)?;
        let unique: std::collections::BTreeSet<&TileCoord> = map.values().flatten().collect();
        msg.push_str(&format!(
            "{}: {} tracts, {} distinct tiles at zoom {} -> {}\n",
            c.name,
            map.len(),
            unique.len(),
            cfg.zoom,
            st.cache.path("tiles.csv").display()
        ));
    }
    Ok(msg)
}

pub fn cmd_fetch(cfg: &PipelineConfig, only: Option<&str>) -> Result<String, CliError> {
    let mut msg = String::new();
    for c in cfg.city(only)? {
        let FeatureSource::Builtin { cache_dir, .. } = &c.features else {
            return Err(CliError::Config(format!("city {}: fetch needs features.source = \"builtin\"", c.name)));
        };
        let Some(f) = &c.fetch else {
            return Err(CliError::Config(format!("city {}: no [cities.fetch] settings", c.name)));
        };
        let mut st = CityStages::new(cfg, c);
        let b = st.boundaries()?;
        let (map, _) = st.tiles(&b)?;
        let unique: std::collections::BTreeSet<TileCoord> = map.values().flatten().copied().collect();
        let tiles: Vec<TileCoord> = unique.into_iter().collect();
        let mut fc = FetchConfig::new(f.url_template.clone(), cache_dir.clone(), f.rate_limit);
        fc.concurrency = f.concurrency.max(1);
        fc.max_attempts = f.max_attempts.max(1);
        let statuses = fetch_tiles(&tiles, &fc).map_err(|e| CliError::Config(format!("city {}: {e}", c.name)))?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut log = Vec::new();
        for (t, s) in tiles.iter().zip(&statuses) {
            let k = match s {
                FetchStatus::Cached => "cached",
                FetchStatus::Fetched { .. } => "fetched",
                FetchStatus::PermanentFailure { .. } => "permanent_failure",
                FetchStatus::TransientFailure { .. } => "transient_failure",
            };
            *counts.entry(k).or_default() += 1;
            if !matches!(s, FetchStatus::Cached | FetchStatus::Fetched { .. }) {
                log.push(serde_json::json!({"tile": t.to_string(), "outcome": s}));
            }
        }
        let mut text = serde_json::to_string_pretty(&log).expect("json");
        text.push('\n');
        write_file(&st.cache.path("fetch_failures.json"), text.as_bytes())?;
        let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        msg.push_str(&format!("{}: {} tiles: {}\n", c.name, tiles.len(), parts.join(" ")));
    }
    Ok(msg)
}

fn cmd_features(cfg: &PipelineConfig, only: Option<&str>, builtin: bool) -> Result<String, CliError> {
    let mut msg = String::new();
    for c in cfg.city(only)? {
        let is_builtin = matches!(c.features, FeatureSource::Builtin { .. });
        if is_builtin != builtin {
            let want = if builtin { "builtin" } else { "imported" };
            return Err(CliError::Config(format!("city {}: this command needs features.source = \"{want}\"", c.name)));
        }
        let mut st = CityStages::new(cfg, c);
        let b = st.boundaries()?;
        let (map, key) = st.tiles(&b)?;
        let m = st.features(&map, &key)?;
        msg.push_str(&format!(
            "{}: {} tracts x {} features ({}) -> {}\n",
            c.name,
            m.n_tracts(),
            m.n_features(),
            m.provenance,
            st.cache.path("tract_features.csv").display()
        ));
    }
    Ok(msg)
}

pub fn cmd_extract(cfg: &PipelineConfig, only: Option<&str>) -> Result<String, CliError> {
    cmd_features(cfg, only, true)
}

pub fn cmd_import_features(cfg: &PipelineConfig, only: Option<&str>) -> Result<String, CliError> {
    cmd_features(cfg, only, false)
}

pub fn cmd_labels(cfg: &PipelineConfig, only: Option<&str>, pct: f64, category: RateCategory) -> Result<String, CliError> {
    let mut msg = String::new();
    for c in cfg.city(only)? {
        let mut st = CityStages::new(cfg, c);
        let b = st.boundaries()?;
        let (stats, _) = st.rates(&b)?;
        let (map, _) = st.tiles(&b)?;
        let rates: BTreeMap<String, f64> =
            stats.iter().filter_map(|s| s.rate(category).map(|r| (s.tract_id.clone(), r))).collect();
        let labels = export_finetune_labels(&rates, &map, pct)
            .map_err(|e| CliError::Data { stage: format!("{}/labels", c.name), message: e.to_string() })?;
        let path = cfg.output_dir.join("labels").join(format!("{}_{}.csv", c.name, category.as_str()));
        write_file(&path, labels.to_csv().as_bytes())?;
        msg.push_str(&format!(
            "{}: {} low tracts (rate <= {}), {} high tracts (rate >= {}), {} tiles -> {}\n",
            c.name,
            labels.low_tracts.len(),
            labels.low_cutoff,
            labels.high_tracts.len(),
            labels.high_cutoff,
            labels.rows.len(),
            path.display()
        ));
    }
    Ok(msg)
}

/// Options for `synth` beyond the spec file.
pub struct SynthOptions {
    pub out: PathBuf,
    pub spec: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Adds a second city with the same coefficients and rates shifted by this many SDs.
    pub second_city_shift: Option<f64>,
}

fn synth_city_block(spec: &SyntheticCitySpec, dir: &str) -> String {
    let features = if spec.tile_image_px > 0 {
        format!("{{ source = \"builtin\", cache_dir = \"{dir}/tiles\" }}")
    } else {
        format!("{{ source = \"imported\", path = \"{dir}/tile_features.csv\" }}")
    };
    format!(
        "[[cities]]\nname = \"{name}\"\nboundaries = \"{dir}/boundaries.geojson\"\ncrimes = \"{dir}/crimes.csv\"\ncrime_schema = \"chicago\"\nacs = \"{dir}/acs.csv\"\nfeatures = {features}\n",
        name = spec.name
    )
}

/// Writes one or two synthetic cities and a `config.toml` that runs them.
pub fn cmd_synth(opts: &SynthOptions) -> Result<String, CliError> {
    let mut spec = match &opts.spec {
        Some(p) => toml::from_str::<SyntheticCitySpec>(&read_file(p)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => SyntheticCitySpec::default(),
    };
    if let Some(s) = opts.seed {
        spec.seed = s;
    }
    let mut specs = vec![spec.clone()];
    if let Some(shift) = opts.second_city_shift {
        specs.push(SyntheticCitySpec {
            name: format!("{}_b", spec.name),
            seed: spec.seed.wrapping_add(1),
            shift_sd: shift,
            ..spec.clone()
        });
    }
    let mut config = format!("output_dir = \"out\"\nzoom = {}\n\n[harness]\nseed = {}\n\n", spec.zoom, spec.seed);
    let mut msg = String::new();
    for s in &specs {
        let city = generate_city(s).map_err(|e| CliError::Config(e.to_string()))?;
        let dir = opts.out.join(&s.name);
        city.write_to(&dir).map_err(|e| CliError::Data { stage: "synth".into(), message: e.to_string() })?;
        config.push_str(&synth_city_block(s, &s.name));
        config.push('\n');
        msg.push_str(&format!(
            "{}: {} tracts, {} tile rows, true r2 {:.4} -> {}\n",
            s.name,
            city.boundaries.len(),
            city.tile_features.len(),
            city.params.true_r2,
            dir.display()
        ));
    }
    write_file(&opts.out.join("config.toml"), config.as_bytes())?;
    msg.push_str(&format!("config -> {}\n", opts.out.join("config.toml").display()));
    Ok(msg)
}
