use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geo::{polygon_area_km2, TractBoundary};

/// Socioeconomic variable names, in feature order. All but `population_density`
/// are percentages.
pub const SOCIO_VARIABLES: [&str; 7] = [
    "pct_below_poverty",
    "pct_black",
    "pct_white",
    "pct_employed",
    "pct_age_10_20",
    "pct_bachelors_or_higher",
    "population_density",
];

/// ACS column names for the tract key, population and each percentage variable.
/// Defaults equal the variable names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcsColumns {
    pub tract_id: String,
    pub population: String,
    pub pct_below_poverty: String,
    pub pct_black: String,
    pub pct_white: String,
    pub pct_employed: String,
    pub pct_age_10_20: String,
    pub pct_bachelors_or_higher: String,
}

impl Default for AcsColumns {
    fn default() -> Self {
        Self {
            tract_id: "GEOID".into(),
            population: "population".into(),
            pct_below_poverty: "pct_below_poverty".into(),
            pct_black: "pct_black".into(),
            pct_white: "pct_white".into(),
            pct_employed: "pct_employed".into(),
            pct_age_10_20: "pct_age_10_20".into(),
            pct_bachelors_or_higher: "pct_bachelors_or_higher".into(),
        }
    }
}

impl AcsColumns {
    fn percentages(&self) -> [(&'static str, &str); 6] {
        [
            (SOCIO_VARIABLES[0], &self.pct_below_poverty),
            (SOCIO_VARIABLES[1], &self.pct_black),
            (SOCIO_VARIABLES[2], &self.pct_white),
            (SOCIO_VARIABLES[3], &self.pct_employed),
            (SOCIO_VARIABLES[4], &self.pct_age_10_20),
            (SOCIO_VARIABLES[5], &self.pct_bachelors_or_higher),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocioProfile {
    pub tract_id: String,
    pub variables: BTreeMap<String, f64>,
}

impl SocioProfile {
    /// Values in [`SOCIO_VARIABLES`] order.
    pub fn values(&self) -> Vec<f64> {
        SOCIO_VARIABLES.iter().map(|v| self.variables[*v]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    pub tract_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcsParsed {
    /// Sorted by tract id.
    pub profiles: Vec<SocioProfile>,
    /// Population of every accepted row, including tracts without a boundary.
    pub populations: BTreeMap<String, f64>,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

/// Parses an ACS table keyed by tract id. Density is population over the tract's
/// boundary area; rows for tracts without a boundary produce a warning and no profile.
pub fn parse_acs_csv(csv_text: &str, columns: &AcsColumns, boundaries: &[TractBoundary]) -> Result<AcsParsed, IngestError> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let c_id = col(&columns.tract_id)?;
    let c_pop = col(&columns.population)?;
    let pct_cols: Vec<(&str, usize)> = columns
        .percentages()
        .into_iter()
        .map(|(var, name)| col(name).map(|i| (var, i)))
        .collect::<Result<_, _>>()?;
    let areas: HashMap<&str, f64> = boundaries.iter().map(|b| (b.tract_id.as_str(), polygon_area_km2(b))).collect();

    let mut out = AcsParsed { profiles: Vec::new(), populations: BTreeMap::new(), rejected: Vec::new(), warnings: Vec::new() };
    for row in rdr.records() {
        let row = row?;
        let tract_id = row.get(c_id).unwrap_or("").trim().to_string();
        let reject = |reason: String| RejectedRow { tract_id: tract_id.clone(), reason };
        let population = match row.get(c_pop).unwrap_or("").trim().parse::<f64>() {
            Ok(p) if p.is_finite() && p >= 0.0 => p,
            _ => {
                out.rejected.push(reject("population is not a non-negative number".into()));
                continue;
            }
        };
        let mut variables = BTreeMap::new();
        let mut bad = None;
        for &(var, i) in &pct_cols {
            match row.get(i).unwrap_or("").trim().parse::<f64>() {
                Ok(v) if (0.0..=100.0).contains(&v) => {
                    variables.insert(var.to_string(), v);
                }
                Ok(v) => {
                    bad = Some(format!("{var} = {v} is outside [0, 100]"));
                    break;
                }
                Err(_) => {
                    bad = Some(format!("{var} is not a number"));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            out.rejected.push(reject(reason));
            continue;
        }
        out.populations.insert(tract_id.clone(), population);
        let Some(&area) = areas.get(tract_id.as_str()) else {
            out.warnings.push(format!("tract {tract_id} is in the ACS table but has no boundary"));
            continue;
        };
        if !(area > 0.0) {
            out.rejected.push(reject("tract area is zero; density undefined".into()));
            continue;
        }
        variables.insert("population_density".into(), population / area);
        out.profiles.push(SocioProfile { tract_id, variables });
    }
    out.profiles.sort_by(|a, b| a.tract_id.cmp(&b.tract_id));
    Ok(out)
}
