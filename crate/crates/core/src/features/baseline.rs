use std::path::Path;

use image::RgbImage;

use super::{FeatureError, TileFeatures};
use crate::geo::fetch::tile_cache_path;
use crate::geo::TileCoord;
use crate::par;

pub const BASELINE_LAYOUT: &str = "baseline-v1";
pub const BASELINE_DIM: usize = 32;

/// Green cover: G exceeds both R and B by more than this many 8-bit levels.
const GREEN_MARGIN: i32 = 10;
/// Edge: luminance-gradient magnitude above this (luminance in [0, 1]).
const EDGE_THRESHOLD: f64 = 25.0 / 255.0;
const LUM_BINS: usize = 16;
const ORIENT_BINS: usize = 8;

/// Names of the 32 built-in features, in layout order.
pub fn baseline_feature_names() -> Vec<String> {
    let mut v: Vec<String> = ["mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b", "green_fraction", "edge_density"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend((0..LUM_BINS).map(|i| format!("lum_hist_{i:02}")));
    v.extend((0..ORIENT_BINS).map(|i| format!("orient_hist_{i}")));
    v
}

fn luminance(p: &image::Rgb<u8>) -> f64 {
    let [r, g, b] = p.0;
    ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).clamp(0.0, 1.0)
}

fn features_of(img: &RgbImage) -> Result<Vec<f64>, FeatureError> {
    let (w, h) = img.dimensions();
    if w < 3 || h < 3 {
        return Err(FeatureError::TooSmall { width: w, height: h });
    }
    let npix = (w as usize * h as usize) as f64;
    let mut out = vec![0.0; BASELINE_DIM];

    let mut sum = [0.0f64; 3];
    let mut green = 0usize;
    let mut lum = vec![0.0f64; w as usize * h as usize];
    let mut lum_hist = [0.0f64; LUM_BINS];
    for (i, p) in img.pixels().enumerate() {
        let [r, g, b] = p.0;
        for (s, v) in sum.iter_mut().zip(p.0) {
            *s += v as f64 / 255.0;
        }
        if (g as i32) > (r as i32) + GREEN_MARGIN && (g as i32) > (b as i32) + GREEN_MARGIN {
            green += 1;
        }
        let l = luminance(p);
        lum[i] = l;
        lum_hist[((l * LUM_BINS as f64) as usize).min(LUM_BINS - 1)] += 1.0;
    }
    let mean = sum.map(|s| s / npix);
    let mut var = [0.0f64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            let d = p.0[c] as f64 / 255.0 - mean[c];
            var[c] += d * d;
        }
    }
    for c in 0..3 {
        out[c] = mean[c];
        out[3 + c] = (var[c] / npix).sqrt();
    }
    out[6] = green as f64 / npix;

    let (wu, hu) = (w as usize, h as usize);
    let at = |x: usize, y: usize| lum[y * wu + x];
    let mut edges = 0usize;
    let mut orient = [0.0f64; ORIENT_BINS];
    for y in 1..hu - 1 {
        for x in 1..wu - 1 {
            let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let mag = gx.hypot(gy);
            if mag > EDGE_THRESHOLD {
                edges += 1;
            }
            if mag > 0.0 {
                // Unsigned orientation in [0, π).
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += std::f64::consts::PI;
                }
                let bin = ((theta / std::f64::consts::PI * ORIENT_BINS as f64) as usize).min(ORIENT_BINS - 1);
                orient[bin] += mag;
            }
        }
    }
    out[7] = edges as f64 / ((wu - 2) * (hu - 2)) as f64;
    for (i, c) in lum_hist.iter().enumerate() {
        out[8 + i] = c / npix;
    }
    let total: f64 = orient.iter().sum();
    if total > 0.0 {
        for (i, m) in orient.iter().enumerate() {
            out[24 + i] = m / total;
        }
    }
    Ok(out)
}

/// Computes the 32-value `baseline-v1` vector from encoded image bytes.
/// Alpha is discarded before any statistic is computed.
pub fn extract_baseline_features(tile: TileCoord, image_bytes: &[u8]) -> Result<TileFeatures, FeatureError> {
    let img = image::load_from_memory(image_bytes).map_err(|e| FeatureError::Decode(e.to_string()))?;
    let values = features_of(&img.to_rgb8())?;
    Ok(TileFeatures { tile, values, layout_id: BASELINE_LAYOUT.to_string() })
}

/// Extracts features for every tile found under `cache_dir`, in parallel.
/// Returns the vectors in input order and a `(tile, reason)` list for tiles that
/// are missing or fail to decode.
pub fn extract_cached_tiles(tiles: &[TileCoord], cache_dir: &Path) -> (Vec<TileFeatures>, Vec<(TileCoord, String)>) {
    let results = par::map(tiles, |&t| {
        let path = tile_cache_path(cache_dir, t);
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        extract_baseline_features(t, &bytes).map_err(|e| e.to_string())
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (t, r) in tiles.iter().zip(results) {
        match r {
            Ok(f) => ok.push(f),
            Err(e) => failed.push((*t, e)),
        }
    }
    (ok, failed)
}
