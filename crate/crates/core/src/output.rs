//! Prediction CSVs, choropleth GeoJSON and the experiment summary table.

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::fmt_sig;
use crate::geo::{boundary_geometry, TractBoundary};
use crate::harness::{EvalReport, EvalRow};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("report tracts missing from boundaries: {0:?}")]
    MissingBoundaries(Vec<String>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("predictions line {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

pub const PREDICTIONS_HEADER: &str = "tract_id,observed,predicted,residual,fold,split_label";

/// One row per evaluated tract, sorted by tract id; `residual = observed − predicted`.
pub fn emit_predictions_csv(report: &EvalReport) -> String {
    let mut rows: Vec<&EvalRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| a.tract_id.cmp(&b.tract_id));
    let mut s = String::from(PREDICTIONS_HEADER);
    s.push('\n');
    for r in rows {
        let fold = r.fold.map(|f| f.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{},{}\n", r.tract_id, r.observed, r.predicted, r.residual(), fold, r.split_label));
    }
    s
}

pub fn read_predictions_csv(text: &str) -> Result<Vec<EvalRow>, OutputError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != PREDICTIONS_HEADER {
        return Err(OutputError::BadRow { line: 1, reason: format!("unexpected header {headers:?}") });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, OutputError> {
            rec[i].parse().map_err(|_| OutputError::BadRow { line, reason: format!("bad number {:?}", &rec[i]) })
        };
        let fold = match &rec[4] {
            "" => None,
            f => Some(f.parse().map_err(|_| OutputError::BadRow { line, reason: format!("bad fold {f:?}") })?),
        };
        out.push(EvalRow {
            tract_id: rec[0].to_string(),
            observed: num(1)?,
            predicted: num(2)?,
            fold,
            split_label: rec[5].to_string(),
        });
    }
    Ok(out)
}

/// A FeatureCollection with one feature per report tract and per excluded tract
/// (`excluded` maps tract id to reason), sorted by tract id.
pub fn emit_choropleth(
    boundaries: &[TractBoundary],
    report: &EvalReport,
    excluded: &BTreeMap<String, String>,
) -> Result<String, OutputError> {
    let by_id: HashMap<&str, &TractBoundary> = boundaries.iter().map(|b| (b.tract_id.as_str(), b)).collect();
    let missing: Vec<String> =
        report.rows.iter().filter(|r| !by_id.contains_key(r.tract_id.as_str())).map(|r| r.tract_id.clone()).collect();
    if !missing.is_empty() {
        return Err(OutputError::MissingBoundaries(missing));
    }
    let mut props: BTreeMap<&str, Map<String, Value>> = BTreeMap::new();
    for (id, reason) in excluded {
        if by_id.contains_key(id.as_str()) {
            let mut p = Map::new();
            p.insert("tract_id".into(), json!(id));
            p.insert("excluded".into(), json!(true));
            p.insert("reason".into(), json!(reason));
            props.insert(id, p);
        }
    }
    for r in &report.rows {
        let mut p = Map::new();
        p.insert("tract_id".into(), json!(r.tract_id));
        p.insert("excluded".into(), json!(false));
        p.insert("observed".into(), json!(r.observed));
        p.insert("predicted".into(), json!(r.predicted));
        p.insert("residual".into(), json!(r.residual()));
        p.insert("split_label".into(), json!(r.split_label));
        props.insert(&r.tract_id, p);
    }
    let features: Vec<Value> = props
        .into_iter()
        .map(|(id, p)| json!({"type": "Feature", "properties": p, "geometry": boundary_geometry(by_id[id])}))
        .collect();
    let fc = json!({
        "type": "FeatureCollection",
        "name": report.experiment_id,
        "features": features,
    });
    let mut s = serde_json::to_string(&fc).expect("json");
    s.push('\n');
    Ok(s)
}

/// One line of the experiment summary; every field is already formatted so the
/// table and CSV carry identical text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryRow {
    pub city: String,
    pub category: String,
    pub split: String,
    pub n: String,
    pub alpha: String,
    pub lambda: String,
    pub rmse: String,
    pub r2: String,
}

pub const SUMMARY_COLUMNS: [&str; 8] = ["city", "category", "split", "n", "alpha", "lambda", "rmse", "r2"];

impl SummaryRow {
    pub fn from_report(r: &EvalReport) -> Self {
        Self {
            city: r.city.clone(),
            category: r.category.clone(),
            split: r.split.clone(),
            n: r.metrics.n.to_string(),
            alpha: fmt_sig(r.hyperparameters.alpha, 6),
            lambda: fmt_sig(r.hyperparameters.lambda, 6),
            rmse: fmt_sig(r.metrics.rmse, 6),
            r2: r.metrics.r_squared.map_or_else(|| "NA".to_string(), |v| format!("{:.2}%", 100.0 * v)),
        }
    }

    fn cells(&self) -> [&str; 8] {
        [&self.city, &self.category, &self.split, &self.n, &self.alpha, &self.lambda, &self.rmse, &self.r2]
    }
}

/// Rows in report order.
pub fn summary_rows(reports: &[EvalReport]) -> Vec<SummaryRow> {
    reports.iter().map(SummaryRow::from_report).collect()
}

/// Space-aligned text table: text columns left-aligned, numbers right-aligned.
pub fn render_summary_table(rows: &[SummaryRow]) -> String {
    let mut widths = SUMMARY_COLUMNS.map(str::len);
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r.cells()) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: [&str; 8]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i < 3 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut s = line(SUMMARY_COLUMNS);
    s.push('\n');
    for r in rows {
        s.push_str(&line(r.cells()));
        s.push('\n');
    }
    s
}

pub fn render_summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record(r.cells()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Parses [`render_summary_csv`] output.
pub fn read_summary_csv(text: &str) -> Result<Vec<SummaryRow>, OutputError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 8 {
            return Err(OutputError::BadRow { line: rec.position().map_or(0, |p| p.line()), reason: "expected 8 fields".into() });
        }
        out.push(SummaryRow {
            city: rec[0].into(),
            category: rec[1].into(),
            split: rec[2].into(),
            n: rec[3].into(),
            alpha: rec[4].into(),
            lambda: rec[5].into(),
            rmse: rec[6].into(),
            r2: rec[7].into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::BBox;
    use crate::harness::{Hyperparameters, Metrics, R2_DEFINITION};

    fn report(rows: Vec<EvalRow>) -> EvalReport {
        EvalReport {
            experiment_id: "c/total/all".into(),
            city: "c".into(),
            category: "total".into(),
            split: "all".into(),
            metrics: Metrics::from_rows(&rows).unwrap(),
            rows,
            r_squared_definition: R2_DEFINITION.into(),
            hyperparameters: Hyperparameters { alpha: 0.5, lambda: 0.0123456789 },
            fold_choices: vec![],
            provenance: "builtin".into(),
            seed: 1,
            k: 5,
            converged: true,
            notes: vec![],
        }
    }

    fn row(id: &str, o: f64, p: f64, fold: Option<usize>) -> EvalRow {
        EvalRow { tract_id: id.into(), observed: o, predicted: p, fold, split_label: "low_median".into() }
    }

    fn square(id: &str, lon: f64) -> TractBoundary {
        TractBoundary::rectangle(id, BBox { min_lon: lon, max_lon: lon + 0.01, min_lat: 41.0, max_lat: 41.01 }).unwrap()
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![row("b", 2.5, 2.0, Some(1)), row("a", 1.0 / 3.0, 0.1, None), row("c", 7.0, 9.25, Some(0))];
        let text = emit_predictions_csv(&report(rows.clone()));
        assert_eq!(text.lines().count(), 4);
        let back = read_predictions_csv(&text).unwrap();
        assert_eq!(back[0], rows[1]);
        for r in &back {
            let line = text.lines().find(|l| l.starts_with(&format!("{},", r.tract_id))).unwrap();
            let residual: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!((residual - (r.observed - r.predicted)).abs() < 1e-12);
        }
    }

    #[test]
    fn choropleth_marks_excluded() {
        let b = vec![square("a", -87.0), square("b", -86.9), square("z", -86.8)];
        let rep = report(vec![row("a", 1.0, 1.5, Some(0)), row("b", 2.0, 1.0, Some(1))]);
        let excl = BTreeMap::from([("z".to_string(), "zero population".to_string())]);
        let v: Value = serde_json::from_str(&emit_choropleth(&b, &rep, &excl).unwrap()).unwrap();
        let feats = v["features"].as_array().unwrap();
        assert_eq!(feats.len(), 3);
        assert_eq!(feats[2]["properties"]["excluded"], json!(true));
        assert!(feats[2]["properties"].get("predicted").is_none());
        assert_eq!(feats[0]["properties"]["residual"].as_f64().unwrap(), -0.5);
    }

    #[test]
    fn choropleth_missing_boundary() {
        let rep = report(vec![row("a", 1.0, 1.5, Some(0)), row("q", 2.0, 1.0, Some(1))]);
        match emit_choropleth(&[square("a", -87.0)], &rep, &BTreeMap::new()) {
            Err(OutputError::MissingBoundaries(m)) => assert_eq!(m, vec!["q"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_and_csv_agree() {
        let reps: Vec<EvalReport> = (0..3)
            .map(|i| report(vec![row("a", 1.0, 1.1, Some(0)), row("b", 2.0, 2.0 + i as f64 * 0.1, Some(1)), row("c", 4.0, 3.5, Some(2))]))
            .collect();
        let rows = summary_rows(&reps);
        let table = render_summary_table(&rows);
        assert_eq!(table.lines().count(), 4);
        let csv = render_summary_csv(&rows);
        assert_eq!(read_summary_csv(&csv).unwrap(), rows);
        for r in &rows {
            assert!(r.r2.ends_with('%'));
            assert!(table.contains(&r.r2));
        }
        assert_eq!(rows[0].r2, format!("{:.2}%", 100.0 * reps[0].metrics.r_squared.unwrap()));
    }
}
