use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{baseline_feature_names, layout_feature_names, FeatureError, TileFeatures, BASELINE_LAYOUT};
use crate::fmt_sig;
use crate::geo::TileCoord;
use crate::par;

/// How tile vectors combine into a tract row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// Where a feature matrix came from: `builtin` or `imported:<layout>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Provenance {
    Builtin,
    Imported(String),
}

impl Provenance {
    pub fn for_layout(layout_id: &str) -> Self {
        if layout_id == BASELINE_LAYOUT {
            Self::Builtin
        } else {
            Self::Imported(layout_id.to_string())
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Builtin => f.write_str("builtin"),
            Self::Imported(l) => write!(f, "imported:{l}"),
        }
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Provenance {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        if s == "builtin" {
            Ok(Self::Builtin)
        } else if let Some(l) = s.strip_prefix("imported:") {
            Ok(Self::Imported(l.to_string()))
        } else {
            Err(format!("unknown provenance {s:?}"))
        }
    }
}

/// Tract-major feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub tract_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub rows: Array2<f64>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn new(
        tract_ids: Vec<String>,
        feature_names: Vec<String>,
        rows: Array2<f64>,
        provenance: Provenance,
    ) -> Result<Self, FeatureError> {
        if rows.nrows() != tract_ids.len() || rows.ncols() != feature_names.len() {
            return Err(FeatureError::BadRow {
                line: 0,
                reason: format!(
                    "matrix is {}x{} but there are {} tracts and {} feature names",
                    rows.nrows(),
                    rows.ncols(),
                    tract_ids.len(),
                    feature_names.len()
                ),
            });
        }
        let mut seen = HashSet::new();
        for id in &tract_ids {
            if !seen.insert(id.as_str()) {
                return Err(FeatureError::DuplicateTract(id.clone()));
            }
        }
        if let Some(((r, c), v)) = rows.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::BadRow { line: r as u64, reason: format!("{} is {v}", feature_names[c]) });
        }
        Ok(Self { tract_ids, feature_names, rows, provenance })
    }

    pub fn n_tracts(&self) -> usize {
        self.tract_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn index_of(&self, tract_id: &str) -> Option<usize> {
        self.tract_ids.iter().position(|t| t == tract_id)
    }

    pub fn row(&self, tract_id: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(tract_id).map(|i| self.rows.row(i))
    }

    /// Rows for `ids` in the given order; `None` when any id is absent.
    pub fn select(&self, ids: &[String]) -> Option<Array2<f64>> {
        let index: HashMap<&str, usize> = self.tract_ids.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut out = Array2::zeros((ids.len(), self.n_features()));
        for (k, id) in ids.iter().enumerate() {
            out.row_mut(k).assign(&self.rows.row(*index.get(id.as_str())?));
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures {
    pub matrix: FeatureMatrix,
    /// Tracts with no tiles, which get no row.
    pub omitted: Vec<String>,
}

/// Pools tile vectors into one row per tract (sorted by tract id). Shared tiles
/// count toward every tract that lists them.
pub fn pool_tract_features(
    tile_features: &[TileFeatures],
    tract_to_tiles: &BTreeMap<String, Vec<TileCoord>>,
    pooling: Pooling,
) -> Result<PooledFeatures, FeatureError> {
    let layouts: BTreeSet<&str> = tile_features.iter().map(|f| f.layout_id.as_str()).collect();
    if layouts.len() > 1 {
        return Err(FeatureError::MixedLayouts(layouts.into_iter().map(str::to_string).collect()));
    }
    let layout = layouts.into_iter().next().unwrap_or(BASELINE_LAYOUT);
    let dim = tile_features.first().map_or(0, |f| f.values.len());
    if let Some(f) = tile_features.iter().find(|f| f.values.len() != dim) {
        return Err(FeatureError::BadRow {
            line: 0,
            reason: format!("tile {} has {} values, expected {dim}", f.tile, f.values.len()),
        });
    }
    let by_tile: HashMap<TileCoord, &[f64]> = tile_features.iter().map(|f| (f.tile, f.values.as_slice())).collect();

    let mut missing: BTreeSet<TileCoord> = BTreeSet::new();
    for tiles in tract_to_tiles.values() {
        missing.extend(tiles.iter().filter(|t| !by_tile.contains_key(t)));
    }
    if !missing.is_empty() {
        return Err(FeatureError::MissingTiles(missing.into_iter().collect()));
    }

    let (kept, omitted): (Vec<_>, Vec<_>) = tract_to_tiles.iter().partition(|(_, tiles)| !tiles.is_empty());
    let pooled: Vec<Vec<f64>> = par::map(&kept, |(_, tiles)| {
        let mut acc = match pooling {
            Pooling::Mean => vec![0.0; dim],
            Pooling::Max => vec![f64::NEG_INFINITY; dim],
        };
        for t in tiles.iter() {
            for (a, v) in acc.iter_mut().zip(by_tile[t]) {
                match pooling {
                    Pooling::Mean => *a += v,
                    Pooling::Max => *a = a.max(*v),
                }
            }
        }
        if pooling == Pooling::Mean {
            let n = tiles.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        acc
    });

    let mut rows = Array2::zeros((kept.len(), dim));
    for (i, r) in pooled.iter().enumerate() {
        rows.row_mut(i).assign(&ArrayView1::from(r.as_slice()));
    }
    let matrix = FeatureMatrix::new(
        kept.iter().map(|(id, _)| (*id).clone()).collect(),
        layout_feature_names(layout, dim),
        rows,
        Provenance::for_layout(layout),
    )?;
    Ok(PooledFeatures { matrix, omitted: omitted.into_iter().map(|(id, _)| id.clone()).collect() })
}

/// `tract_id,<feature names>` with 9 significant digits.
pub fn write_tract_features_csv(m: &FeatureMatrix) -> String {
    let mut s = String::from("tract_id");
    for n in &m.feature_names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (id, row) in m.tract_ids.iter().zip(m.rows.rows()) {
        s.push_str(id);
        for v in row {
            s.push(',');
            s.push_str(&fmt_sig(*v, 9));
        }
        s.push('\n');
    }
    s
}

/// Reads a tract-feature CSV. A header equal to the built-in names marks the
/// matrix `builtin`; anything else is `imported:external-D`.
pub fn read_tract_features_csv(csv_text: &str) -> Result<FeatureMatrix, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("tract_id") {
        return Err(FeatureError::BadHeader("first column must be tract_id".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() + 1 {
            return Err(FeatureError::Ragged { line, expected: names.len() + 1, found: rec.len() });
        }
        ids.push(rec[0].trim().to_string());
        for (i, f) in rec.iter().skip(1).enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| FeatureError::BadRow { line, reason: format!("{} = {f:?} is not a number", names[i]) })?;
            data.push(v);
        }
    }
    let provenance = if names == baseline_feature_names() {
        Provenance::Builtin
    } else {
        Provenance::Imported(format!("external-{}", names.len()))
    };
    let rows = Array2::from_shape_vec((ids.len(), names.len()), data).expect("row lengths checked");
    FeatureMatrix::new(ids, names, rows, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(x: u32, values: Vec<f64>) -> TileFeatures {
        TileFeatures { tile: TileCoord::new(18, x, 0).unwrap(), values, layout_id: "external-2".into() }
    }

    fn t(x: u32) -> TileCoord {
        TileCoord::new(18, x, 0).unwrap()
    }

    #[test]
    fn one_tile_and_two_tile_tracts() {
        let feats = vec![tf(0, vec![0.0, 2.0]), tf(1, vec![2.0, 0.0]), tf(2, vec![5.0, 7.0])];
        let map = BTreeMap::from([
            ("a".to_string(), vec![t(0), t(1)]),
            ("b".to_string(), vec![t(2)]),
            ("c".to_string(), vec![]),
        ]);
        let p = pool_tract_features(&feats, &map, Pooling::Mean).unwrap();
        assert_eq!(p.matrix.tract_ids, vec!["a", "b"]);
        assert_eq!(p.matrix.rows.row(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!(p.matrix.rows.row(1).to_vec(), vec![5.0, 7.0]);
        assert_eq!(p.omitted, vec!["c"]);
        assert_eq!(p.matrix.provenance.to_string(), "imported:external-2");

        let m = pool_tract_features(&feats, &map, Pooling::Max).unwrap();
        assert_eq!(m.matrix.rows.row(0).to_vec(), vec![2.0, 2.0]);
    }

    #[test]
    fn missing_tiles_listed() {
        let map = BTreeMap::from([("a".to_string(), vec![t(0), t(9)])]);
        match pool_tract_features(&[tf(0, vec![1.0, 1.0])], &map, Pooling::Mean) {
            Err(FeatureError::MissingTiles(m)) => assert_eq!(m, vec![t(9)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_layouts_rejected() {
        let mut b = tf(1, vec![1.0, 1.0]);
        b.layout_id = "baseline-v1".into();
        let map = BTreeMap::from([("a".to_string(), vec![t(0)])]);
        assert!(matches!(
            pool_tract_features(&[tf(0, vec![1.0, 1.0]), b], &map, Pooling::Mean),
            Err(FeatureError::MixedLayouts(_))
        ));
    }

    #[test]
    fn tract_csv_round_trip() {
        let feats = vec![tf(0, vec![0.1234567891234, -2.0]), tf(1, vec![3.0, 1e-7])];
        let map = BTreeMap::from([("x1".to_string(), vec![t(0)]), ("x2".to_string(), vec![t(1)])]);
        let m = pool_tract_features(&feats, &map, Pooling::Mean).unwrap().matrix;
        let text = write_tract_features_csv(&m);
        assert!(text.starts_with("tract_id,f0,f1\nx1,0.123456789,-2\n"));
        let back = read_tract_features_csv(&text).unwrap();
        assert_eq!(write_tract_features_csv(&back), text);
        assert_eq!(back.provenance, m.provenance);
    }

    #[test]
    fn provenance_strings() {
        assert_eq!(Provenance::try_from("builtin".to_string()).unwrap(), Provenance::Builtin);
        assert_eq!(Provenance::Imported("external-4096".into()).to_string(), "imported:external-4096");
        assert!(Provenance::try_from("other".to_string()).is_err());
    }
}
