use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::percentile;

/// High-crime rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// High = rate > Q3 + 1.5·IQR.
    #[default]
    Tukey,
    /// High = rate ≥ the given percentile.
    Percentile(f64),
}

impl std::fmt::Display for SplitRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitRule::Tukey => f.write_str("tukey"),
            SplitRule::Percentile(p) => write!(f, "percentile({p})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSplit {
    pub rule: SplitRule,
    pub threshold: f64,
    /// Sorted tract ids.
    pub low_median: Vec<String>,
    pub high: Vec<String>,
}

impl StratifiedSplit {
    pub fn label(&self, tract_id: &str) -> &'static str {
        if self.high.binary_search_by(|t| t.as_str().cmp(tract_id)).is_ok() {
            "high"
        } else {
            "low_median"
        }
    }
}

/// Partitions tracts into low/median and high by `rule`. Identical rates give an
/// empty high set.
pub fn split_by_crime_level(rates: &BTreeMap<String, f64>, rule: SplitRule) -> StratifiedSplit {
    let values: Vec<f64> = rates.values().copied().collect();
    if values.is_empty() {
        return StratifiedSplit { rule, threshold: 0.0, low_median: vec![], high: vec![] };
    }
    let all_equal = values.iter().all(|v| *v == values[0]);
    let (threshold, is_high): (f64, Box<dyn Fn(f64) -> bool>) = match rule {
        SplitRule::Tukey => {
            let (q1, q3) = (percentile(&values, 25.0), percentile(&values, 75.0));
            let t = q3 + 1.5 * (q3 - q1);
            (t, Box::new(move |r| r > t))
        }
        SplitRule::Percentile(p) => {
            let t = percentile(&values, p);
            (t, Box::new(move |r| r >= t))
        }
    };
    let (high, low_median): (Vec<_>, Vec<_>) =
        rates.iter().map(|(id, &r)| (id.clone(), r)).partition(|&(_, r)| !all_equal && is_high(r));
    StratifiedSplit {
        rule,
        threshold,
        low_median: low_median.into_iter().map(|p| p.0).collect(),
        high: high.into_iter().map(|p| p.0).collect(),
    }
}
