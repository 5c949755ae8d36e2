use std::collections::HashMap;

use super::{FeatureError, TileFeatures};
use crate::fmt_sig;
use crate::geo::TileCoord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedFeatureRow {
    /// 1-based line in the input, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedFeatures {
    /// In order of each tile's first appearance; duplicates keep the last row's values.
    pub features: Vec<TileFeatures>,
    pub rejected: Vec<RejectedFeatureRow>,
    pub warnings: Vec<String>,
}

/// Reads a `z,x,y,f0,...,f{D-1}` tile-feature CSV. Vectors get layout `external-D`.
pub fn import_external_features(csv_text: &str) -> Result<ImportedFeatures, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() < 4 || cols[..3] != ["z", "x", "y"] {
        return Err(FeatureError::BadHeader(format!("expected z,x,y,f0,..., found {}", cols.join(","))));
    }
    let dim = cols.len() - 3;
    let layout_id = format!("external-{dim}");

    let mut out = ImportedFeatures { features: Vec::new(), rejected: Vec::new(), warnings: Vec::new() };
    let mut seen: HashMap<TileCoord, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.len() {
            return Err(FeatureError::Ragged { line, expected: cols.len(), found: rec.len() });
        }
        let tile = match parse_tile(&rec) {
            Ok(t) => t,
            Err(reason) => {
                out.rejected.push(RejectedFeatureRow { line, reason });
                continue;
            }
        };
        let mut values = Vec::with_capacity(dim);
        let mut bad = None;
        for (i, field) in rec.iter().skip(3).enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(v) => {
                    bad = Some(format!("f{i} is {v}"));
                    break;
                }
                Err(_) => {
                    bad = Some(format!("f{i} = {field:?} is not a number"));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            out.rejected.push(RejectedFeatureRow { line, reason });
            continue;
        }
        let tf = TileFeatures { tile, values, layout_id: layout_id.clone() };
        match seen.get(&tile) {
            Some(&i) => {
                out.warnings.push(format!("line {line}: duplicate tile {tile}; keeping the later row"));
                out.features[i] = tf;
            }
            None => {
                seen.insert(tile, out.features.len());
                out.features.push(tf);
            }
        }
    }
    Ok(out)
}

fn parse_tile(rec: &csv::StringRecord) -> Result<TileCoord, String> {
    let f = |i: usize, name: &str| -> Result<u32, String> {
        rec[i].trim().parse::<u32>().map_err(|_| format!("{name} = {:?} is not a tile index", &rec[i]))
    };
    let z = f(0, "z")?;
    let z = u8::try_from(z).map_err(|_| format!("zoom {z} out of range"))?;
    TileCoord::new(z, f(1, "x")?, f(2, "y")?).map_err(|e| e.to_string())
}

/// Writes tile vectors as `z,x,y,f0,...` with 9 significant digits.
/// All vectors must share one layout.
pub fn export_tile_features(features: &[TileFeatures]) -> Result<String, FeatureError> {
    let mut layouts: Vec<String> = features.iter().map(|f| f.layout_id.clone()).collect();
    layouts.sort();
    layouts.dedup();
    if layouts.len() > 1 {
        return Err(FeatureError::MixedLayouts(layouts));
    }
    let dim = features.first().map_or(0, |f| f.values.len());
    let mut s = String::from("z,x,y");
    for i in 0..dim {
        s.push_str(&format!(",f{i}"));
    }
    s.push('\n');
    for f in features {
        if f.values.len() != dim {
            return Err(FeatureError::Ragged { line: 0, expected: dim, found: f.values.len() });
        }
        s.push_str(&format!("{},{},{}", f.tile.zoom, f.tile.x, f.tile.y));
        for v in &f.values {
            s.push(',');
            s.push_str(&fmt_sig(*v, 9));
        }
        s.push('\n');
    }
    Ok(s)
}
