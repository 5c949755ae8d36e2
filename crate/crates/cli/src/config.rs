//! TOML pipeline configuration. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tractlens_core::features::Pooling;
use tractlens_core::geo::MAX_ZOOM;
use tractlens_core::harness::HarnessConfig;
use tractlens_core::ingest::{AcsColumns, CategoryMap, CrimeSchema};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_zoom")]
    pub zoom: u8,
    #[serde(default)]
    pub harness: HarnessConfig,
    pub cities: Vec<CityConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_zoom() -> u8 {
    18
}

/// A named preset or a full column mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSpec {
    Preset(String),
    Custom(CrimeSchema),
}

impl SchemaSpec {
    pub fn resolve(&self) -> Result<CrimeSchema, CliError> {
        match self {
            SchemaSpec::Custom(s) => Ok(s.clone()),
            SchemaSpec::Preset(p) => match p.as_str() {
                "chicago" => Ok(CrimeSchema::chicago()),
                "los_angeles" => Ok(CrimeSchema::los_angeles()),
                other => Err(CliError::Config(format!("unknown crime schema preset {other:?} (chicago, los_angeles)"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSource {
    /// Built-in image statistics from tiles under `cache_dir`.
    Builtin {
        cache_dir: PathBuf,
        #[serde(default)]
        pooling: Pooling,
    },
    /// A `z,x,y,f0,...` tile-feature CSV.
    Imported {
        path: PathBuf,
        #[serde(default)]
        pooling: Pooling,
    },
}

impl FeatureSource {
    pub fn pooling(&self) -> Pooling {
        match self {
            FeatureSource::Builtin { pooling, .. } | FeatureSource::Imported { pooling, .. } => *pooling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchSettings {
    pub url_template: String,
    #[serde(default = "default_rate")]
    pub rate_limit: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_rate() -> f64 {
    5.0
}
fn default_concurrency() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityConfig {
    pub name: String,
    pub boundaries: PathBuf,
    #[serde(default = "default_id_property")]
    pub id_property: String,
    pub crimes: PathBuf,
    pub crime_schema: SchemaSpec,
    #[serde(default)]
    pub categories: Option<CategoryMap>,
    pub acs: PathBuf,
    #[serde(default)]
    pub acs_columns: AcsColumns,
    pub features: FeatureSource,
    #[serde(default)]
    pub fetch: Option<FetchSettings>,
}

fn default_id_property() -> String {
    tractlens_core::geo::DEFAULT_ID_PROPERTY.to_string()
}

impl PipelineConfig {
    /// Reads and validates a config; paths come back absolute.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for c in &mut self.cities {
            fix(&mut c.boundaries);
            fix(&mut c.crimes);
            fix(&mut c.acs);
            match &mut c.features {
                FeatureSource::Builtin { cache_dir, .. } => fix(cache_dir),
                FeatureSource::Imported { path, .. } => fix(path),
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.zoom > MAX_ZOOM {
            return Err(CliError::Config(format!("zoom {} is outside [0, {MAX_ZOOM}]", self.zoom)));
        }
        if self.cities.is_empty() {
            return Err(CliError::Config("no [[cities]] configured".into()));
        }
        let mut names: Vec<&str> = self.cities.iter().map(|c| c.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("city names must be unique".into()));
        }
        for c in &self.cities {
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(CliError::Config(format!("city name {:?} must be non-empty [A-Za-z0-9_-]", c.name)));
            }
            if c.name == crate::commands::POOLED {
                return Err(CliError::Config(format!("city name {:?} is reserved", c.name)));
            }
            c.crime_schema.resolve()?;
        }
        let h = &self.harness;
        if h.k < 2 || h.selection.inner_k < 2 {
            return Err(CliError::Config("k and inner_k must be at least 2".into()));
        }
        if h.selection.alpha_grid.is_empty() || h.selection.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(CliError::Config("alpha_grid must be non-empty with values in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn city(&self, name: Option<&str>) -> Result<Vec<&CityConfig>, CliError> {
        match name {
            None => Ok(self.cities.iter().collect()),
            Some(n) => self
                .cities
                .iter()
                .find(|c| c.name == n)
                .map(|c| vec![c])
                .ok_or_else(|| CliError::Config(format!("no city named {n:?} in config"))),
        }
    }
}

/// Fails with a config error naming the first missing input.
pub fn require_exists(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::Config(format!("input not found: {}", p.display())));
        }
    }
    Ok(())
}
