//! Per-tile feature vectors and their pooling into tract-level matrices.

mod baseline;
mod external;
mod labels;
mod pool;

pub use baseline::{baseline_feature_names, extract_baseline_features, extract_cached_tiles, BASELINE_DIM, BASELINE_LAYOUT};
pub use external::{export_tile_features, import_external_features, ImportedFeatures, RejectedFeatureRow};
pub use labels::{export_finetune_labels, FinetuneLabels, LabelRow};
pub use pool::{pool_tract_features, read_tract_features_csv, write_tract_features_csv, FeatureMatrix, PooledFeatures, Pooling, Provenance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::TileCoord;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("tile image could not be decoded: {0}")]
    Decode(String),
    #[error("tile image is {width}x{height}; at least 3x3 is needed for gradients")]
    TooSmall { width: u32, height: u32 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad feature CSV header: {0}")]
    BadHeader(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("feature vectors use more than one layout: {0:?}")]
    MixedLayouts(Vec<String>),
    #[error("{} tiles have no feature vector: {}", .0.len(), list_tiles(.0))]
    MissingTiles(Vec<TileCoord>),
    #[error("tract {0} appears more than once")]
    DuplicateTract(String),
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("label percentage must lie in (0, 50], got {0}")]
    BadPercentage(f64),
    #[error("need at least 2 tracts on each side of the split; low {low}, high {high}")]
    TooFewLabeledTracts { low: usize, high: usize },
    #[error("low and high label sets overlap (rates too concentrated to split)")]
    OverlappingLabels,
}

fn list_tiles(t: &[TileCoord]) -> String {
    let mut s: Vec<String> = t.iter().take(20).map(|t| t.to_string()).collect();
    if t.len() > 20 {
        s.push("...".into());
    }
    s.join(", ")
}

/// One tile's feature vector tagged with the layout that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileFeatures {
    pub tile: TileCoord,
    pub values: Vec<f64>,
    pub layout_id: String,
}

/// Column names for a layout: descriptive for the built-in extractor, `f0..` otherwise.
pub fn layout_feature_names(layout_id: &str, dim: usize) -> Vec<String> {
    if layout_id == BASELINE_LAYOUT && dim == BASELINE_DIM {
        baseline_feature_names()
    } else {
        (0..dim).map(|i| format!("f{i}")).collect()
    }
}
