use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{IngestError, TractAssignment};
use crate::geo::{polygon_area_km2, TractBoundary};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub personal: u64,
    pub property: u64,
    pub other: u64,
}

impl CategoryCounts {
    pub fn total(&self) -> u64 {
        self.personal + self.property + self.other
    }
}

/// Crimes per 1,000 persons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TractRates {
    pub total: f64,
    pub personal: f64,
    pub property: f64,
    pub other: f64,
}

/// The response variable of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateCategory {
    Total,
    Personal,
    Property,
}

impl RateCategory {
    pub const ALL: [RateCategory; 3] = [RateCategory::Total, RateCategory::Personal, RateCategory::Property];

    pub fn as_str(&self) -> &'static str {
        match self {
            RateCategory::Total => "total",
            RateCategory::Personal => "personal",
            RateCategory::Property => "property",
        }
    }
}

impl TractRates {
    pub fn get(&self, c: RateCategory) -> f64 {
        match c {
            RateCategory::Total => self.total,
            RateCategory::Personal => self.personal,
            RateCategory::Property => self.property,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    ZeroPopulation,
    NoReportedCrimes,
}

impl Exclusion {
    pub fn reason(&self) -> &'static str {
        match self {
            Exclusion::ZeroPopulation => "zero population",
            Exclusion::NoReportedCrimes => "no reported crimes",
        }
    }

    fn from_reason(s: &str) -> Option<Self> {
        match s {
            "zero population" => Some(Exclusion::ZeroPopulation),
            "no reported crimes" => Some(Exclusion::NoReportedCrimes),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractStats {
    pub tract_id: String,
    pub population: f64,
    pub counts: CategoryCounts,
    /// Present whenever population > 0.
    pub rates: Option<TractRates>,
    pub area_km2: f64,
    pub exclusion: Option<Exclusion>,
}

impl TractStats {
    pub fn new(tract_id: impl Into<String>, counts: CategoryCounts, population: f64, area_km2: f64) -> Self {
        let rates = compute_rates(&counts, population);
        let exclusion = if !(population > 0.0) {
            Some(Exclusion::ZeroPopulation)
        } else if counts.total() == 0 {
            Some(Exclusion::NoReportedCrimes)
        } else {
            None
        };
        Self { tract_id: tract_id.into(), population, counts, rates, area_km2, exclusion }
    }

    pub fn is_excluded(&self) -> bool {
        self.exclusion.is_some()
    }

    /// The modeled rate, when the tract takes part in model fitting.
    pub fn rate(&self, c: RateCategory) -> Option<f64> {
        if self.is_excluded() {
            None
        } else {
            self.rates.map(|r| r.get(c))
        }
    }
}

/// `1000 · count / population` per category; `None` when the population is not positive.
pub fn compute_rates(counts: &CategoryCounts, population: f64) -> Option<TractRates> {
    if !(population > 0.0) {
        return None;
    }
    let r = |c: u64| 1000.0 * c as f64 / population;
    Some(TractRates {
        total: r(counts.total()),
        personal: r(counts.personal),
        property: r(counts.property),
        other: r(counts.other),
    })
}

/// One [`TractStats`] per boundary, sorted by tract id. Tracts without a population
/// estimate get population 0.
pub fn build_tract_stats(
    assignment: &TractAssignment,
    populations: &BTreeMap<String, f64>,
    boundaries: &[TractBoundary],
) -> Vec<TractStats> {
    let mut out: Vec<TractStats> = boundaries
        .iter()
        .map(|b| {
            let counts = assignment.counts.get(&b.tract_id).copied().unwrap_or_default();
            let pop = populations.get(&b.tract_id).copied().unwrap_or(0.0);
            TractStats::new(b.tract_id.clone(), counts, pop, polygon_area_km2(b))
        })
        .collect();
    out.sort_by(|a, b| a.tract_id.cmp(&b.tract_id));
    out.dedup_by(|a, b| a.tract_id == b.tract_id);
    out
}

const HEADER: [&str; 11] = [
    "tract_id",
    "population",
    "count_total",
    "count_personal",
    "count_property",
    "count_other",
    "rate_total",
    "rate_personal",
    "rate_property",
    "excluded",
    "exclusion_reason",
];

pub fn write_tract_stats_csv(stats: &[TractStats]) -> Result<String, IngestError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for s in stats {
        let rate = |f: fn(&TractRates) -> f64| s.rates.as_ref().map(|r| f(r).to_string()).unwrap_or_default();
        w.write_record([
            s.tract_id.clone(),
            s.population.to_string(),
            s.counts.total().to_string(),
            s.counts.personal.to_string(),
            s.counts.property.to_string(),
            s.counts.other.to_string(),
            rate(|r| r.total),
            rate(|r| r.personal),
            rate(|r| r.property),
            s.is_excluded().to_string(),
            s.exclusion.map(|e| e.reason().to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| IngestError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads the canonical tract-stats CSV. Areas are not part of the format and read as 0.
pub fn read_tract_stats_csv(text: &str) -> Result<Vec<TractStats>, IngestError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(IngestError::BadStatsRow { line: 1, reason: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |what: &str| IngestError::BadStatsRow { line, reason: format!("bad {what}") };
        let num = |j: usize| row[j].parse::<u64>().map_err(|_| bad(HEADER[j]));
        let population: f64 = row[1].parse().map_err(|_| bad("population"))?;
        let counts = CategoryCounts { personal: num(3)?, property: num(4)?, other: num(5)? };
        if counts.total() != num(2)? {
            return Err(bad("count_total (does not equal the category sum)"));
        }
        let mut s = TractStats::new(&row[0], counts, population, 0.0);
        let exclusion = match &row[10] {
            "" => None,
            r => Some(Exclusion::from_reason(r).ok_or_else(|| bad("exclusion_reason"))?),
        };
        if exclusion != s.exclusion {
            return Err(bad("exclusion (inconsistent with population and counts)"));
        }
        if let Some(r) = s.rates.as_mut() {
            r.total = row[6].parse().map_err(|_| bad("rate_total"))?;
            r.personal = row[7].parse().map_err(|_| bad("rate_personal"))?;
            r.property = row[8].parse().map_err(|_| bad("rate_property"))?;
        }
        s.exclusion = exclusion;
        out.push(s);
    }
    Ok(out)
}
