//! Per-city stages: rates, tiles and features, each cached by input content hash.

use std::collections::{BTreeMap, BTreeSet};

use tractlens_core::features::{
    export_tile_features, extract_cached_tiles, import_external_features, pool_tract_features,
    read_tract_features_csv, write_tract_features_csv, FeatureMatrix,
};
use tractlens_core::geo::fetch::tile_cache_path;
use tractlens_core::geo::{parse_tract_boundaries, tiles_covering_boundary, TileCoord, TractBoundary};
use tractlens_core::harness::CityData;
use tractlens_core::ingest::{
    assign_crimes_to_tracts, build_tract_stats, parse_acs_csv, parse_crime_csv, read_tract_stats_csv,
    write_tract_stats_csv, SocioProfile, TractStats,
};

use crate::cache::{read_file, KeyBuilder, StageCache};
use crate::config::{require_exists, CityConfig, FeatureSource, PipelineConfig};
use crate::CliError;

fn data(stage: &str, city: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Data { stage: format!("{city}/{stage}"), message: e.to_string() }
}

fn announce(city: &str, stage: &str, cached: bool) {
    eprintln!("[{city}] {stage}: {}", if cached { "cached" } else { "computed" });
}

/// Everything the experiments and emitters need for one city.
pub struct LoadedCity {
    pub boundaries: Vec<TractBoundary>,
    pub tract_tiles: BTreeMap<String, Vec<TileCoord>>,
    pub data: CityData,
    /// Tract id to the reason it has no prediction.
    pub excluded: BTreeMap<String, String>,
}

pub struct CityStages<'a> {
    pub cfg: &'a PipelineConfig,
    pub city: &'a CityConfig,
    pub cache: StageCache,
    boundaries_text: Option<String>,
}

impl<'a> CityStages<'a> {
    pub fn new(cfg: &'a PipelineConfig, city: &'a CityConfig) -> Self {
        let cache = StageCache::new(cfg.output_dir.join("cache").join(&city.name));
        Self { cfg, city, cache, boundaries_text: None }
    }

    fn name(&self) -> &str {
        &self.city.name
    }

    fn boundaries_text(&mut self) -> Result<&str, CliError> {
        if self.boundaries_text.is_none() {
            require_exists(&[&self.city.boundaries])?;
            self.boundaries_text = Some(read_file(&self.city.boundaries)?);
        }
        Ok(self.boundaries_text.as_deref().expect("set above"))
    }

    pub fn boundaries(&mut self) -> Result<Vec<TractBoundary>, CliError> {
        let id_key = self.city.id_property.clone();
        let name = self.name().to_string();
        let parsed = parse_tract_boundaries(self.boundaries_text()?, &id_key).map_err(|e| data("boundaries", &name, e))?;
        for w in &parsed.warnings {
            eprintln!("[{name}] boundaries: warning: {w}");
        }
        if parsed.boundaries.is_empty() {
            return Err(data("boundaries", &name, "no tract boundaries"));
        }
        Ok(parsed.boundaries)
    }

    fn acs(&self, boundaries: &[TractBoundary]) -> Result<(Vec<SocioProfile>, BTreeMap<String, f64>), CliError> {
        let text = read_file(&self.city.acs)?;
        let parsed = parse_acs_csv(&text, &self.city.acs_columns, boundaries).map_err(|e| data("acs", self.name(), e))?;
        for w in &parsed.warnings {
            eprintln!("[{}] acs: warning: {w}", self.name());
        }
        if !parsed.rejected.is_empty() {
            eprintln!("[{}] acs: {} rows rejected", self.name(), parsed.rejected.len());
        }
        Ok((parsed.profiles, parsed.populations))
    }

    /// Tract crime counts and rates; ACS profiles are re-parsed every time since they are cheap.
    pub fn rates(&mut self, boundaries: &[TractBoundary]) -> Result<(Vec<TractStats>, Vec<SocioProfile>), CliError> {
        require_exists(&[&self.city.crimes, &self.city.acs])?;
        let (profiles, populations) = self.acs(boundaries)?;
        let schema = self.city.crime_schema.resolve()?;
        let categories = self.city.categories.clone().unwrap_or_default();
        let crimes = read_file(&self.city.crimes)?;
        let acs = read_file(&self.city.acs)?;
        let mut key = KeyBuilder::new("rates-v1");
        key.add(self.boundaries_text()?.as_bytes())
            .add(self.city.id_property.as_bytes())
            .add(crimes.as_bytes())
            .add(acs.as_bytes())
            .add(serde_json::to_string(&schema).expect("json").as_bytes())
            .add(serde_json::to_string(&categories).expect("json").as_bytes())
            .add(serde_json::to_string(&self.city.acs_columns).expect("json").as_bytes());
        let key = key.finish();
        const FILE: &str = "tract_stats.csv";
        if let Some(text) = self.cache.lookup(FILE, &key) {
            if let Ok(stats) = read_tract_stats_csv(&text) {
                announce(self.name(), "rates", true);
                return Ok((stats, profiles));
            }
        }
        let parsed = parse_crime_csv(&crimes, &schema, &categories).map_err(|e| data("crimes", self.name(), e))?;
        eprintln!(
            "[{}] crimes: {} rows, {} kept, {} invalid, {} outside date window",
            self.name(),
            parsed.total_rows,
            parsed.records.len(),
            parsed.dropped_invalid,
            parsed.dropped_out_of_window
        );
        let assignment = assign_crimes_to_tracts(&parsed.records, boundaries);
        if assignment.unassigned > 0 {
            eprintln!("[{}] crimes: {} outside every tract", self.name(), assignment.unassigned);
        }
        let stats = build_tract_stats(&assignment, &populations, boundaries);
        let text = write_tract_stats_csv(&stats).map_err(|e| data("rates", self.name(), e))?;
        self.cache.store(FILE, &key, &text)?;
        announce(self.name(), "rates", false);
        // Reload so the cached and fresh paths hand back identical values.
        let stats = read_tract_stats_csv(&text).map_err(|e| data("rates", self.name(), e))?;
        Ok((stats, profiles))
    }

    /// Tiles covering each tract at the configured zoom. Degenerate tracts map to no tiles.
    pub fn tiles(&mut self, boundaries: &[TractBoundary]) -> Result<(BTreeMap<String, Vec<TileCoord>>, String), CliError> {
        let zoom = self.cfg.zoom;
        let mut key = KeyBuilder::new("tiles-v1");
        key.add(self.boundaries_text()?.as_bytes()).add(self.city.id_property.as_bytes()).add(&[zoom]);
        let key = key.finish();
        const FILE: &str = "tiles.csv";
        if let Some(text) = self.cache.lookup(FILE, &key) {
            if let Ok(map) = read_tiles_csv(&text, boundaries) {
                announce(self.name(), "tiles", true);
                return Ok((map, key));
            }
        }
        let mut map = BTreeMap::new();
        for b in boundaries {
            let cov = tiles_covering_boundary(b, zoom).map_err(|e| data("tiles", self.name(), e))?;
            if cov.degenerate {
                eprintln!("[{}] tiles: warning: tract {} has zero area", self.name(), b.tract_id);
            }
            map.insert(b.tract_id.clone(), cov.tiles);
        }
        self.cache.store(FILE, &key, &write_tiles_csv(&map))?;
        announce(self.name(), "tiles", false);
        Ok((map, key))
    }

    /// Tract feature matrix from the configured source.
    pub fn features(
        &mut self,
        tract_tiles: &BTreeMap<String, Vec<TileCoord>>,
        tiles_key: &str,
    ) -> Result<FeatureMatrix, CliError> {
        let pooling = self.city.features.pooling();
        let mut key = KeyBuilder::new("features-v1");
        key.add(tiles_key.as_bytes()).add(format!("{pooling:?}").as_bytes());
        let unique: BTreeSet<TileCoord> = tract_tiles.values().flatten().copied().collect();
        let unique: Vec<TileCoord> = unique.into_iter().collect();
        let imported_text = match &self.city.features {
            FeatureSource::Imported { path, .. } => {
                require_exists(&[path])?;
                let text = read_file(path)?;
                key.add(b"imported").add(text.as_bytes());
                Some(text)
            }
            FeatureSource::Builtin { cache_dir, .. } => {
                key.add(b"builtin");
                for t in &unique {
                    match std::fs::read(tile_cache_path(cache_dir, *t)) {
                        Ok(bytes) => key.add(&bytes),
                        Err(_) => key.add(b"\0missing"),
                    };
                }
                None
            }
        };
        let key = key.finish();
        const FILE: &str = "tract_features.csv";
        if let Some(text) = self.cache.lookup(FILE, &key) {
            if let Ok(m) = read_tract_features_csv(&text) {
                announce(self.name(), "features", true);
                return Ok(m);
            }
        }
        let (tile_features, usable) = match (&self.city.features, imported_text) {
            (FeatureSource::Imported { .. }, Some(text)) => {
                let imp = import_external_features(&text).map_err(|e| data("import-features", self.name(), e))?;
                for w in &imp.warnings {
                    eprintln!("[{}] import-features: warning: {w}", self.name());
                }
                for r in &imp.rejected {
                    eprintln!("[{}] import-features: line {} rejected: {}", self.name(), r.line, r.reason);
                }
                let have: BTreeSet<TileCoord> = imp.features.iter().map(|f| f.tile).collect();
                (imp.features, have)
            }
            (FeatureSource::Builtin { cache_dir, .. }, _) => {
                let (feats, failures) = extract_cached_tiles(&unique, cache_dir);
                if !failures.is_empty() {
                    eprintln!("[{}] extract: {} of {} tiles unusable, e.g. {}: {}", self.name(), failures.len(), unique.len(), failures[0].0, failures[0].1);
                }
                let text = export_tile_features(&feats).map_err(|e| data("extract", self.name(), e))?;
                crate::cache::write_file(&self.cache.path("tile_features.csv"), text.as_bytes())?;
                let have: BTreeSet<TileCoord> = feats.iter().map(|f| f.tile).collect();
                (feats, have)
            }
            _ => unreachable!("imported text is read for imported sources"),
        };
        // Tracts keep the tiles that have vectors; a tract left with none gets no row.
        let mut dropped = 0usize;
        let filtered: BTreeMap<String, Vec<TileCoord>> = tract_tiles
            .iter()
            .map(|(id, ts)| {
                let kept: Vec<TileCoord> = ts.iter().copied().filter(|t| usable.contains(t)).collect();
                dropped += ts.len() - kept.len();
                (id.clone(), kept)
            })
            .collect();
        if dropped > 0 {
            eprintln!("[{}] features: warning: {dropped} tract-tile pairs have no feature vector", self.name());
        }
        let pooled = pool_tract_features(&tile_features, &filtered, pooling).map_err(|e| data("features", self.name(), e))?;
        if !pooled.omitted.is_empty() {
            eprintln!("[{}] features: {} tracts have no feature row", self.name(), pooled.omitted.len());
        }
        if pooled.matrix.n_tracts() == 0 {
            return Err(data("features", self.name(), "no tract has any tile features"));
        }
        let text = write_tract_features_csv(&pooled.matrix);
        self.cache.store(FILE, &key, &text)?;
        announce(self.name(), "features", false);
        read_tract_features_csv(&text).map_err(|e| data("features", self.name(), e))
    }

    /// Runs every stage.
    pub fn load(&mut self) -> Result<LoadedCity, CliError> {
        let boundaries = self.boundaries()?;
        let (stats, socio) = self.rates(&boundaries)?;
        let (tract_tiles, tiles_key) = self.tiles(&boundaries)?;
        let features = self.features(&tract_tiles, &tiles_key)?;
        let data = CityData { name: self.city.name.clone(), features, stats, socio };
        let mut excluded: BTreeMap<String, String> = data
            .stats
            .iter()
            .filter_map(|s| s.exclusion.map(|e| (s.tract_id.clone(), e.reason().to_string())))
            .collect();
        for id in data.rated_without_features() {
            excluded.insert(id, "no tile features".into());
        }
        Ok(LoadedCity { boundaries, tract_tiles, data, excluded })
    }
}

pub fn write_tiles_csv(map: &BTreeMap<String, Vec<TileCoord>>) -> String {
    let mut s = String::from("tract_id,z,x,y\n");
    for (id, tiles) in map {
        for t in tiles {
            s.push_str(&format!("{id},{},{},{}\n", t.zoom, t.x, t.y));
        }
    }
    s
}

/// Inverse of [`write_tiles_csv`]; every boundary gets an entry, possibly empty.
pub fn read_tiles_csv(text: &str, boundaries: &[TractBoundary]) -> Result<BTreeMap<String, Vec<TileCoord>>, String> {
    let mut map: BTreeMap<String, Vec<TileCoord>> =
        boundaries.iter().map(|b| (b.tract_id.clone(), Vec::new())).collect();
    let mut lines = text.lines();
    if lines.next() != Some("tract_id,z,x,y") {
        return Err("bad tiles header".into());
    }
    for line in lines {
        let f: Vec<&str> = line.rsplitn(4, ',').collect();
        if f.len() != 4 {
            return Err(format!("bad tiles line {line:?}"));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| format!("bad tiles line {line:?}"));
        let z = u8::try_from(num(f[2])?).map_err(|_| "bad zoom".to_string())?;
        let t = TileCoord::new(z, num(f[1])?, num(f[0])?).map_err(|e| e.to_string())?;
        map.get_mut(f[3]).ok_or_else(|| format!("unknown tract {}", f[3]))?.push(t);
    }
    Ok(map)
}
