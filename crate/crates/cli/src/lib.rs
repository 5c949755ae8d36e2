//! The `tractlens` command line: config loading, cached pipeline stages and
//! artifact emission. `main.rs` only parses arguments and maps errors to exit codes.

pub mod cache;
pub mod commands;
pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;
use tractlens_core::ingest::RateCategory;

pub use commands::artifact_stem;
pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in {stage}: {message}")]
    Data { stage: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } | CliError::Io { .. } => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tractlens", version, about = "Tract-level crime-rate models from satellite tile features")]
pub struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "tractlens.toml")]
    pub config: PathBuf,
    /// Overrides the harness seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Treat solver non-convergence as fatal (exit 4).
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, tiles, features, experiments and reports for every configured city.
    Run {
        #[arg(long)]
        city: Option<String>,
    },
    /// Write a synthetic dataset plus a ready-to-run config.toml.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// SyntheticCitySpec as TOML; defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Also generate a second city whose rates are shifted by this many SDs.
        #[arg(long)]
        second_city_shift: Option<f64>,
    },
    /// Compute the tiles covering each tract.
    Tiles {
        #[arg(long)]
        city: Option<String>,
    },
    /// Download missing tile images into the builtin feature cache.
    Fetch {
        #[arg(long)]
        city: Option<String>,
    },
    /// Builtin image features from cached tiles, pooled per tract.
    Extract {
        #[arg(long)]
        city: Option<String>,
    },
    /// Import an external tile-feature CSV, pooled per tract.
    ImportFeatures {
        #[arg(long)]
        city: Option<String>,
    },
    /// Crime counts and per-1,000 rates per tract.
    Rates {
        #[arg(long)]
        city: Option<String>,
    },
    /// Tile labels (low = 0, high = 1) from the rate tails, for fine-tuning an external model.
    Labels {
        #[arg(long)]
        city: Option<String>,
        /// Tail size in percent, in (0, 50].
        #[arg(long, default_value_t = 10.0)]
        pct: f64,
        #[arg(long, value_parser = parse_category, default_value = "total")]
        category: RateCategory,
    },
    /// Fit on one city and evaluate on another.
    Transfer {
        #[arg(long)]
        train: String,
        #[arg(long)]
        test: String,
    },
    /// Summary table from the report JSON files of a previous run.
    Report {
        /// Defaults to `<output_dir>/reports`.
        #[arg(long)]
        reports: Option<PathBuf>,
    },
}

fn parse_category(s: &str) -> Result<RateCategory, String> {
    RateCategory::ALL
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| format!("unknown category {s:?} (total, personal, property)"))
}

fn configure_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.harness.seed = s;
    }
    Ok(cfg)
}

/// Runs a parsed command; the returned text goes to stdout.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    configure_jobs(cli.jobs)?;
    match &cli.command {
        Command::Synth { out, spec, second_city_shift } => commands::cmd_synth(&commands::SynthOptions {
            out: out.clone(),
            spec: spec.clone(),
            seed: cli.seed,
            second_city_shift: *second_city_shift,
        }),
        Command::Report { reports } => {
            let cfg = PipelineConfig::load(&cli.config);
            let (dir, out) = match (reports, cfg) {
                (Some(r), Ok(c)) => (r.clone(), c.output_dir),
                (Some(r), Err(_)) => (r.clone(), r.parent().map(PathBuf::from).unwrap_or_default()),
                (None, Ok(c)) => (c.output_dir.join("reports"), c.output_dir),
                (None, Err(e)) => return Err(e),
            };
            commands::cmd_report(&dir, &out)
        }
        cmd => {
            let cfg = load_config(cli)?;
            match cmd {
                Command::Run { city } => commands::cmd_run(&cfg, city.as_deref(), cli.strict),
                Command::Tiles { city } => commands::cmd_tiles(&cfg, city.as_deref()),
                Command::Fetch { city } => commands::cmd_fetch(&cfg, city.as_deref()),
                Command::Extract { city } => commands::cmd_extract(&cfg, city.as_deref()),
                Command::ImportFeatures { city } => commands::cmd_import_features(&cfg, city.as_deref()),
                Command::Rates { city } => commands::cmd_rates(&cfg, city.as_deref()),
                Command::Labels { city, pct, category } => commands::cmd_labels(&cfg, city.as_deref(), *pct, *category),
                Command::Transfer { train, test } => commands::cmd_transfer(&cfg, train, test, cli.strict),
                Command::Synth { .. } | Command::Report { .. } => unreachable!("handled above"),
            }
        }
    }
}
