use std::collections::BTreeMap;

use super::FeatureError;
use crate::geo::TileCoord;
use crate::harness::percentile;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabelRow {
    pub tile: TileCoord,
    /// 1 = high crime, 0 = low crime.
    pub label: u8,
    pub tract_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneLabels {
    /// Sorted by tract id, then tile.
    pub rows: Vec<LabelRow>,
    pub low_cutoff: f64,
    pub high_cutoff: f64,
    pub low_tracts: Vec<String>,
    pub high_tracts: Vec<String>,
}

impl FinetuneLabels {
    /// `z,x,y,label,tract_id`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("z,x,y,label,tract_id\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.tile.zoom, r.tile.x, r.tile.y, r.label, r.tract_id));
        }
        s
    }
}

/// Labels tiles of tracts at or above the `(100−pct)`th rate percentile as 1 and
/// at or below the `pct`th as 0; ties at a cutoff fall on that cutoff's side.
pub fn export_finetune_labels(
    tract_rates: &BTreeMap<String, f64>,
    tract_to_tiles: &BTreeMap<String, Vec<TileCoord>>,
    pct: f64,
) -> Result<FinetuneLabels, FeatureError> {
    if !(pct > 0.0 && pct <= 50.0) {
        return Err(FeatureError::BadPercentage(pct));
    }
    let rates: Vec<f64> = tract_rates.values().copied().collect();
    if rates.len() < 4 {
        return Err(FeatureError::TooFewLabeledTracts { low: rates.len().min(1), high: 0 });
    }
    let low_cutoff = percentile(&rates, pct);
    let high_cutoff = percentile(&rates, 100.0 - pct);
    let low_tracts: Vec<String> = tract_rates.iter().filter(|(_, &r)| r <= low_cutoff).map(|(t, _)| t.clone()).collect();
    let high_tracts: Vec<String> =
        tract_rates.iter().filter(|(_, &r)| r >= high_cutoff).map(|(t, _)| t.clone()).collect();
    if low_tracts.len() < 2 || high_tracts.len() < 2 {
        return Err(FeatureError::TooFewLabeledTracts { low: low_tracts.len(), high: high_tracts.len() });
    }
    if low_tracts.iter().any(|t| high_tracts.binary_search(t).is_ok()) {
        return Err(FeatureError::OverlappingLabels);
    }
    let mut rows = Vec::new();
    for (tracts, label) in [(&low_tracts, 0u8), (&high_tracts, 1u8)] {
        for t in tracts {
            for tile in tract_to_tiles.get(t).map(Vec::as_slice).unwrap_or_default() {
                rows.push(LabelRow { tile: *tile, label, tract_id: t.clone() });
            }
        }
    }
    rows.sort_by(|a, b| a.tract_id.cmp(&b.tract_id).then(a.tile.cmp(&b.tile)));
    Ok(FinetuneLabels { rows, low_cutoff, high_cutoff, low_tracts, high_tracts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(rates: &[f64]) -> (BTreeMap<String, f64>, BTreeMap<String, Vec<TileCoord>>) {
        let r: BTreeMap<String, f64> = rates.iter().enumerate().map(|(i, &v)| (format!("t{i:03}"), v)).collect();
        let tiles = r.keys().enumerate().map(|(i, k)| (k.clone(), vec![TileCoord::new(18, i as u32, 0).unwrap()])).collect();
        (r, tiles)
    }

    #[test]
    fn fifteen_percent_of_one_hundred() {
        let rates: Vec<f64> = (0..100).map(|i| (i * 37 % 100) as f64 + 0.5).collect();
        let (r, t) = setup(&rates);
        let l = export_finetune_labels(&r, &t, 15.0).unwrap();
        assert_eq!(l.low_tracts.len(), 15);
        assert_eq!(l.high_tracts.len(), 15);
        assert_eq!(l.rows.iter().filter(|r| r.label == 1).count(), 15);
    }

    #[test]
    fn median_split_of_four() {
        let (r, t) = setup(&[4.0, 1.0, 3.0, 2.0]);
        let l = export_finetune_labels(&r, &t, 50.0).unwrap();
        assert_eq!(l.low_tracts, vec!["t001", "t003"]);
        assert_eq!(l.high_tracts, vec!["t000", "t002"]);
        assert!(l.to_csv().starts_with("z,x,y,label,tract_id\n18,0,0,1,t000\n"));
    }

    #[test]
    fn bad_inputs() {
        let (r, t) = setup(&[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(export_finetune_labels(&r, &t, 25.0), Err(FeatureError::OverlappingLabels)));
        assert!(matches!(export_finetune_labels(&r, &t, 0.0), Err(FeatureError::BadPercentage(_))));
        let (r, t) = setup(&[1.0, 2.0]);
        assert!(matches!(export_finetune_labels(&r, &t, 15.0), Err(FeatureError::TooFewLabeledTracts { .. })));
    }
}
