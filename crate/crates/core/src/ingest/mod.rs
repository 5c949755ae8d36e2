//! Crime and ACS ingestion: parsing, categorization, tract assignment and rates.

mod acs;
mod assign;
mod crime;
mod stats;

pub use acs::{parse_acs_csv, AcsColumns, AcsParsed, RejectedRow, SocioProfile, SOCIO_VARIABLES};
pub use assign::{assign_crimes_to_tracts, TractAssignment};
pub use crime::{
    categorize_crime, parse_crime_csv, Category, CategoryMap, CategoryRule, CrimeRecord, CrimeSchema, DateWindow,
    ParsedCrimes,
};
pub use stats::{
    build_tract_stats, compute_rates, read_tract_stats_csv, write_tract_stats_csv, CategoryCounts, Exclusion,
    RateCategory, TractRates, TractStats,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("configured column {0:?} not found in header")]
    MissingColumn(String),
    #[error("{dropped} of {total} rows were unparseable; the schema config is probably wrong")]
    TooManyDropped { dropped: usize, total: usize },
    #[error("tract-stats csv line {line}: {reason}")]
    BadStatsRow { line: usize, reason: String },
}
