//! Planted-model synthetic cities.
//!
//! A city is a grid of square tracts, each covering `tiles_per_tract` zoom-level
//! tiles. Tile features are U(0, 1); a tract's rate is
//! `max(0, intercept + mean_tile_features · coefficients + N(0, noise_sd))`,
//! optionally with unexplained high-crime outliers. Crimes are emitted as points so
//! the whole ingest path can run on the result.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::features::{export_tile_features, TileFeatures};
use crate::geo::fetch::tile_cache_path;
use crate::geo::{boundary_geometry, lonlat_to_tile, polygon_area_km2, tile_bounds, BBox, GeoPoint, TileCoord, TractBoundary};
use crate::ingest::{CategoryCounts, TractStats};
use crate::{fmt_sig, write_atomic};

/// Variance of one U(0, 1) draw.
const UNIFORM_VAR: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTail {
    /// Share of tracts that receive an extra, feature-independent rate boost.
    pub fraction: f64,
    /// Boost = `scale · sd · (2 + Exp(1))`, with `sd` the rate standard deviation.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCitySpec {
    pub name: String,
    pub grid_cols: usize,
    pub grid_rows: usize,
    /// A perfect square; each tract is a `√t × √t` block of tiles.
    pub tiles_per_tract: usize,
    pub n_features: usize,
    /// Generated from `coefficient_seed` when absent.
    pub coefficients: Option<Vec<f64>>,
    pub coefficient_seed: u64,
    /// Noise SD; when absent it is derived from `target_r2`.
    pub noise_sd: Option<f64>,
    pub target_r2: f64,
    /// Defaults to 6 rate standard deviations, so clipping at zero is negligible.
    pub intercept: Option<f64>,
    /// Added to the intercept in units of the rate standard deviation.
    pub shift_sd: f64,
    pub heavy_tail: Option<HeavyTail>,
    pub zero_population_fraction: f64,
    /// North-west corner of the grid.
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub zoom: u8,
    pub year: i32,
    /// Side length of emitted tile images; 0 writes no images.
    pub tile_image_px: u32,
    pub seed: u64,
}

impl Default for SyntheticCitySpec {
    fn default() -> Self {
        Self {
            name: "synthville".into(),
            grid_cols: 20,
            grid_rows: 10,
            tiles_per_tract: 4,
            n_features: 32,
            coefficients: None,
            coefficient_seed: 7,
            noise_sd: None,
            target_r2: 0.8,
            intercept: None,
            shift_sd: 0.0,
            heavy_tail: None,
            zero_population_fraction: 0.0,
            origin_lon: -87.75,
            origin_lat: 41.95,
            zoom: 18,
            year: 2016,
            tile_image_px: 0,
            seed: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic city: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
}

/// Everything needed to check recovered models against the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingParams {
    pub spec: SyntheticCitySpec,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub noise_sd: f64,
    /// Variance of the pooled linear signal.
    pub signal_var: f64,
    /// `signal_var / (signal_var + noise_sd²)`, before outliers and clipping.
    pub true_r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCrime {
    pub id: u64,
    pub tract_id: String,
    pub location: GeoPoint,
    pub description: &'static str,
    pub timestamp: chrono::NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub params: GeneratingParams,
    pub boundaries: Vec<TractBoundary>,
    pub tract_tiles: BTreeMap<String, Vec<TileCoord>>,
    pub tile_features: Vec<TileFeatures>,
    /// Generated rate per tract, before count rounding.
    pub true_rates: BTreeMap<String, f64>,
    pub populations: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, CategoryCounts>,
    pub crimes: Vec<SyntheticCrime>,
    pub socio_csv: String,
}

/// N(0, 1) coefficients scaled so the pooled signal has standard deviation 10.
pub fn default_coefficients(n_features: usize, tiles_per_tract: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n_features).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
    let pooled_var = UNIFORM_VAR / tiles_per_tract as f64;
    let ss: f64 = z.iter().map(|v| v * v).sum::<f64>() * pooled_var;
    let c = if ss > 0.0 { 10.0 / ss.sqrt() } else { 0.0 };
    z.into_iter().map(|v| v * c).collect()
}

pub fn tract_id(index: usize) -> String {
    format!("99001{:06}", (index + 1) * 100)
}

const PERSONAL: &str = "BATTERY";
const PROPERTY: &str = "CRIMINAL DAMAGE";
const OTHER: &str = "NARCOTICS";

impl SyntheticCitySpec {
    fn validate(&self) -> Result<usize, SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.grid_cols < 2 || self.grid_rows < 2 {
            return bad("grid must be at least 2x2");
        }
        let side = (self.tiles_per_tract as f64).sqrt().round() as usize;
        if side == 0 || side * side != self.tiles_per_tract {
            return bad("tiles_per_tract must be a positive perfect square");
        }
        if self.n_features == 0 {
            return bad("n_features must be positive");
        }
        if matches!(&self.coefficients, Some(c) if c.len() != self.n_features) {
            return bad("coefficient vector length differs from n_features");
        }
        if matches!(self.noise_sd, Some(s) if !(s >= 0.0)) {
            return bad("noise_sd must be non-negative");
        }
        if self.noise_sd.is_none() && !(self.target_r2 > 0.0 && self.target_r2 <= 1.0) {
            return bad("target_r2 must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.zero_population_fraction) {
            return bad("zero_population_fraction must lie in [0, 1)");
        }
        Ok(side)
    }
}

/// Builds a city in memory. Identical specs give identical cities.
pub fn generate_city(spec: &SyntheticCitySpec) -> Result<SyntheticCity, SynthError> {
    let side = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let coefficients =
        spec.coefficients.clone().unwrap_or_else(|| default_coefficients(spec.n_features, spec.tiles_per_tract, spec.coefficient_seed));
    let signal_var = coefficients.iter().map(|c| c * c).sum::<f64>() * UNIFORM_VAR / spec.tiles_per_tract as f64;
    let noise_sd = spec.noise_sd.unwrap_or_else(|| (signal_var * (1.0 - spec.target_r2) / spec.target_r2).sqrt());
    let rate_sd = (signal_var + noise_sd * noise_sd).sqrt();
    let mean_signal: f64 = coefficients.iter().sum::<f64>() * 0.5;
    let intercept = spec.intercept.unwrap_or(6.0 * rate_sd - mean_signal + 1.0) + spec.shift_sd * rate_sd;

    let origin = lonlat_to_tile(GeoPoint::new(spec.origin_lon, spec.origin_lat)?, spec.zoom)?;
    let n_tracts = spec.grid_cols * spec.grid_rows;
    let mut boundaries = Vec::with_capacity(n_tracts);
    let mut tract_tiles = BTreeMap::new();
    let mut tile_features = Vec::with_capacity(n_tracts * spec.tiles_per_tract);
    let mut true_rates = BTreeMap::new();
    let mut populations = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut crimes = Vec::new();
    let mut socio = String::from(
        "GEOID,population,pct_below_poverty,pct_black,pct_white,pct_employed,pct_age_10_20,pct_bachelors_or_higher\n",
    );
    let year_start = NaiveDate::from_ymd_opt(spec.year, 1, 1).expect("valid year").and_hms_opt(0, 0, 0).unwrap();
    let year_secs = (NaiveDate::from_ymd_opt(spec.year + 1, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap() - year_start)
        .num_seconds();

    for row in 0..spec.grid_rows {
        for col in 0..spec.grid_cols {
            let index = row * spec.grid_cols + col;
            let id = tract_id(index);
            let (x0, y0) = (origin.x + (col * side) as u32, origin.y + (row * side) as u32);
            let nw = tile_bounds(TileCoord::new(spec.zoom, x0, y0)?);
            let se = tile_bounds(TileCoord::new(spec.zoom, x0 + side as u32 - 1, y0 + side as u32 - 1)?);
            let bbox = BBox { min_lon: nw.min_lon, max_lon: se.max_lon, min_lat: se.min_lat, max_lat: nw.max_lat };
            let boundary = TractBoundary::rectangle(id.clone(), bbox)?;

            let mut pooled = vec![0.0; spec.n_features];
            let mut tiles = Vec::with_capacity(spec.tiles_per_tract);
            for dx in 0..side as u32 {
                for dy in 0..side as u32 {
                    let tile = TileCoord::new(spec.zoom, x0 + dx, y0 + dy)?;
                    let values: Vec<f64> = (0..spec.n_features).map(|_| rng.random::<f64>()).collect();
                    for (p, v) in pooled.iter_mut().zip(&values) {
                        *p += v / spec.tiles_per_tract as f64;
                    }
                    tile_features.push(TileFeatures { tile, values, layout_id: format!("external-{}", spec.n_features) });
                    tiles.push(tile);
                }
            }

            let signal: f64 = pooled.iter().zip(&coefficients).map(|(f, c)| f * c).sum();
            let mut rate = intercept + signal + noise_sd * normal.sample(&mut rng);
            if let Some(ht) = &spec.heavy_tail {
                if rng.random::<f64>() < ht.fraction {
                    rate += ht.scale * rate_sd * (2.0 + Exp::new(1.0).unwrap().sample(&mut rng));
                }
            }
            let rate = rate.max(0.0);
            let population: f64 = if rng.random::<f64>() < spec.zero_population_fraction {
                0.0
            } else {
                rng.random_range(2000..=6000) as f64
            };

            let total = (rate * population / 1000.0).round() as u64;
            let personal = (total as f64 * 0.3).round() as u64;
            let property = (total as f64 * 0.5).round() as u64;
            let c = CategoryCounts { personal, property, other: total - personal - property };
            let inset = 1e-4;
            for (n, description) in [(c.personal, PERSONAL), (c.property, PROPERTY), (c.other, OTHER)] {
                for _ in 0..n {
                    let u = inset + (1.0 - 2.0 * inset) * rng.random::<f64>();
                    let v = inset + (1.0 - 2.0 * inset) * rng.random::<f64>();
                    let location = GeoPoint {
                        lon: bbox.min_lon + u * (bbox.max_lon - bbox.min_lon),
                        lat: bbox.min_lat + v * (bbox.max_lat - bbox.min_lat),
                    };
                    let timestamp = year_start + Duration::seconds(rng.random_range(0..year_secs));
                    crimes.push(SyntheticCrime { id: 0, tract_id: id.clone(), location, description, timestamp });
                }
            }

            let poverty = (20.0 + 0.8 * (rate - intercept - mean_signal) + 5.0 * normal.sample(&mut rng)).clamp(0.0, 100.0);
            let black = rng.random_range(0.0..60.0);
            let white = rng.random_range(0.0..(100.0 - black));
            let employed = rng.random_range(40.0..80.0);
            let youth = rng.random_range(5.0..20.0);
            let bachelors = rng.random_range(5.0..70.0);
            socio.push_str(&format!(
                "{id},{},{},{},{},{},{},{}\n",
                population,
                fmt_sig(poverty, 9),
                fmt_sig(black, 9),
                fmt_sig(white, 9),
                fmt_sig(employed, 9),
                fmt_sig(youth, 9),
                fmt_sig(bachelors, 9)
            ));

            boundaries.push(boundary);
            tract_tiles.insert(id.clone(), tiles);
            true_rates.insert(id.clone(), rate);
            populations.insert(id.clone(), population);
            counts.insert(id, c);
        }
    }
    for (i, c) in crimes.iter_mut().enumerate() {
        c.id = i as u64 + 1;
    }

    let params = GeneratingParams {
        spec: spec.clone(),
        coefficients,
        intercept,
        noise_sd,
        signal_var,
        true_r2: if signal_var + noise_sd * noise_sd > 0.0 { signal_var / (signal_var + noise_sd * noise_sd) } else { 1.0 },
    };
    Ok(SyntheticCity { params, boundaries, tract_tiles, tile_features, true_rates, populations, counts, crimes, socio_csv: socio })
}

impl SyntheticCity {
    /// Tract statistics as the ingest path would compute them.
    pub fn tract_stats(&self) -> Vec<TractStats> {
        self.boundaries
            .iter()
            .map(|b| {
                let id = &b.tract_id;
                TractStats::new(id.clone(), self.counts[id], self.populations[id], polygon_area_km2(b))
            })
            .collect()
    }

    pub fn boundaries_geojson(&self) -> String {
        let features: Vec<_> = self
            .boundaries
            .iter()
            .map(|b| json!({"type": "Feature", "properties": {"GEOID": b.tract_id}, "geometry": boundary_geometry(b)}))
            .collect();
        let mut s = serde_json::to_string(&json!({"type": "FeatureCollection", "features": features})).expect("json");
        s.push('\n');
        s
    }

    /// Crime CSV in the Chicago export layout.
    pub fn crimes_csv(&self) -> String {
        let mut s = String::from("ID,Date,Primary Type,Latitude,Longitude\n");
        for c in &self.crimes {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                c.id,
                c.timestamp.format("%m/%d/%Y %I:%M:%S %p"),
                c.description,
                c.location.lat,
                c.location.lon
            ));
        }
        s
    }

    /// Writes the dataset under `dir`:
    /// `boundaries.geojson`, `crimes.csv`, `acs.csv`, `tile_features.csv`,
    /// `true_rates.csv`, `params.json`, and tile images under `tiles/` when enabled.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        write_atomic(&dir.join("boundaries.geojson"), self.boundaries_geojson().as_bytes())?;
        write_atomic(&dir.join("crimes.csv"), self.crimes_csv().as_bytes())?;
        write_atomic(&dir.join("acs.csv"), self.socio_csv.as_bytes())?;
        let tiles = export_tile_features(&self.tile_features).map_err(|e| SynthError::Invalid(e.to_string()))?;
        write_atomic(&dir.join("tile_features.csv"), tiles.as_bytes())?;
        let mut rates = String::from("tract_id,rate\n");
        for (id, r) in &self.true_rates {
            rates.push_str(&format!("{id},{r}\n"));
        }
        write_atomic(&dir.join("true_rates.csv"), rates.as_bytes())?;
        let mut params = serde_json::to_string_pretty(&self.params).expect("json");
        params.push('\n');
        write_atomic(&dir.join("params.json"), params.as_bytes())?;
        if self.params.spec.tile_image_px > 0 {
            self.write_tile_images(&dir.join("tiles"))?;
        }
        Ok(())
    }

    /// Noise images whose mean colour follows the first three tile features.
    fn write_tile_images(&self, cache_dir: &Path) -> Result<(), SynthError> {
        let px = self.params.spec.tile_image_px.max(3);
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.spec.seed ^ 0x7469_6c65);
        for tf in &self.tile_features {
            let base: Vec<f64> = (0..3).map(|i| tf.values.get(i).copied().unwrap_or(0.5) * 200.0).collect();
            let img = RgbImage::from_fn(px, px, |_, _| {
                let mut ch = [0u8; 3];
                for (c, b) in ch.iter_mut().zip(&base) {
                    *c = (b + rng.random_range(0.0..55.0)) as u8;
                }
                Rgb(ch)
            });
            let mut buf = Cursor::new(Vec::new());
            img.write_to(&mut buf, ImageFormat::Png).map_err(|e| SynthError::Invalid(e.to_string()))?;
            write_atomic(&tile_cache_path(cache_dir, tf.tile), buf.get_ref())?;
        }
        Ok(())
    }
}
