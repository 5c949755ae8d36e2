use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Personal,
    Property,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRule {
    /// Case-insensitive substring of the raw offense description.
    pub pattern: String,
    pub category: Category,
}

/// Ordered offense-description rules; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryMap {
    pub rules: Vec<CategoryRule>,
}

impl CategoryMap {
    pub fn new(rules: impl IntoIterator<Item = (&'static str, Category)>) -> Self {
        Self {
            rules: rules
                .into_iter()
                .map(|(p, c)| CategoryRule { pattern: p.to_string(), category: c })
                .collect(),
        }
    }
}

impl Default for CategoryMap {
    /// Personal: assault, battery, homicide. Property: robbery and property
    /// destruction, with the Chicago ("criminal damage") and Los Angeles
    /// ("vandalism") spellings of the latter.
    fn default() -> Self {
        use Category::*;
        Self::new([
            ("assault", Personal),
            ("battery", Personal),
            ("homicide", Personal),
            ("robbery", Property),
            ("property destruction", Property),
            ("criminal damage", Property),
            ("vandalism", Property),
        ])
    }
}

pub fn categorize_crime(raw_description: &str, map: &CategoryMap) -> Category {
    let d = raw_description.to_lowercase();
    map.rules
        .iter()
        .find(|r| d.contains(&r.pattern.to_lowercase()))
        .map_or(Category::Other, |r| r.category)
}

/// Half-open date range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn calendar_year(year: i32) -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(year, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(year + 1, 1, 1).expect("valid date"),
        }
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        let d = t.date();
        d >= self.start && d < self.end
    }
}

fn default_window() -> Option<DateWindow> {
    Some(DateWindow::calendar_year(2016))
}

/// Maps one city's crime CSV columns onto [`CrimeRecord`] fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrimeSchema {
    pub id_column: String,
    pub datetime_column: String,
    /// chrono format string; date-only formats are accepted (midnight is assumed).
    pub datetime_format: String,
    pub lat_column: String,
    pub lon_column: String,
    pub description_column: String,
    /// Records outside this window are dropped; `None` keeps everything.
    #[serde(default = "default_window")]
    pub date_window: Option<DateWindow>,
}

impl CrimeSchema {
    /// Column layout of the Chicago open-data crime export.
    pub fn chicago() -> Self {
        Self {
            id_column: "ID".into(),
            datetime_column: "Date".into(),
            datetime_format: "%m/%d/%Y %I:%M:%S %p".into(),
            lat_column: "Latitude".into(),
            lon_column: "Longitude".into(),
            description_column: "Primary Type".into(),
            date_window: default_window(),
        }
    }

    /// Column layout of the Los Angeles open-data crime export.
    pub fn los_angeles() -> Self {
        Self {
            id_column: "DR_NO".into(),
            datetime_column: "DATE OCC".into(),
            datetime_format: "%m/%d/%Y %I:%M:%S %p".into(),
            lat_column: "LAT".into(),
            lon_column: "LON".into(),
            description_column: "Crm Cd Desc".into(),
            date_window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeRecord {
    pub event_id: String,
    pub timestamp: NaiveDateTime,
    pub location: GeoPoint,
    pub raw_description: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCrimes {
    pub records: Vec<CrimeRecord>,
    pub total_rows: usize,
    /// Rows with unparseable or invalid coordinates or timestamps.
    pub dropped_invalid: usize,
    pub dropped_out_of_window: usize,
}

fn parse_timestamp(s: &str, fmt: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, fmt)
        .ok()
        .or_else(|| NaiveDate::parse_from_str(s, fmt).ok().map(|d| d.and_time(chrono::NaiveTime::MIN)))
}

/// Parses a crime CSV with a city-specific schema.
///
/// Fails when a configured column is absent or when more than half the rows are
/// unparseable.
pub fn parse_crime_csv(csv_text: &str, schema: &CrimeSchema, categories: &CategoryMap) -> Result<ParsedCrimes, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (ci, ct, clat, clon, cd) = (
        col(&schema.id_column)?,
        col(&schema.datetime_column)?,
        col(&schema.lat_column)?,
        col(&schema.lon_column)?,
        col(&schema.description_column)?,
    );

    let mut out = ParsedCrimes { records: Vec::new(), total_rows: 0, dropped_invalid: 0, dropped_out_of_window: 0 };
    for row in rdr.records() {
        let row = row?;
        out.total_rows += 1;
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let parsed = (|| {
            let lat: f64 = field(clat).parse().ok()?;
            let lon: f64 = field(clon).parse().ok()?;
            let location = GeoPoint::new(lon, lat).ok()?;
            let timestamp = parse_timestamp(field(ct), &schema.datetime_format)?;
            Some((location, timestamp))
        })();
        let Some((location, timestamp)) = parsed else {
            out.dropped_invalid += 1;
            continue;
        };
        if schema.date_window.is_some_and(|w| !w.contains(timestamp)) {
            out.dropped_out_of_window += 1;
            continue;
        }
        let raw_description = field(cd).to_string();
        out.records.push(CrimeRecord {
            event_id: field(ci).to_string(),
            timestamp,
            location,
            category: categorize_crime(&raw_description, categories),
            raw_description,
        });
    }
    if out.dropped_invalid * 2 > out.total_rows {
        return Err(IngestError::TooManyDropped { dropped: out.dropped_invalid, total: out.total_rows });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHICAGO: &str = "\
ID,Case Number,Date,Primary Type,Latitude,Longitude
10001,HZ1,01/15/2016 10:30:00 PM,BATTERY,41.8781,-87.6298
10002,HZ2,02/01/2016 08:00:00 AM,ROBBERY,41.8800,-87.6300
10003,HZ3,12/31/2016 11:59:59 PM,GAMBLING,41.8700,-87.6200
";

    const LOS_ANGELES: &str = "\
DR_NO,DATE OCC,AREA NAME,Crm Cd Desc,LAT,LON
10001,01/15/2016 10:30:00 PM,Central,BATTERY,41.8781,-87.6298
10002,02/01/2016 08:00:00 AM,Central,ROBBERY,41.8800,-87.6300
10003,12/31/2016 11:59:59 PM,Central,GAMBLING,41.8700,-87.6200
";

    #[test]
    fn well_formed_rows() {
        let p = parse_crime_csv(CHICAGO, &CrimeSchema::chicago(), &CategoryMap::default()).unwrap();
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.dropped_invalid, 0);
        assert_eq!(p.records[0].category, Category::Personal);
        assert_eq!(p.records[1].category, Category::Property);
        assert_eq!(p.records[2].category, Category::Other);
    }

    #[test]
    fn empty_lat_is_dropped_and_counted() {
        let text = "ID,Date,Primary Type,Latitude,Longitude\n\
                    1,01/15/2016 10:30:00 PM,BATTERY,41.8,-87.6\n\
                    2,01/15/2016 10:30:00 PM,BATTERY,,-87.6\n\
                    3,01/15/2016 10:30:00 PM,THEFT,41.9,-87.7\n";
        let p = parse_crime_csv(text, &CrimeSchema::chicago(), &CategoryMap::default()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.dropped_invalid, 1);
    }

    #[test]
    fn two_city_schemas_give_identical_records() {
        let cats = CategoryMap::default();
        let a = parse_crime_csv(CHICAGO, &CrimeSchema::chicago(), &cats).unwrap();
        let b = parse_crime_csv(LOS_ANGELES, &CrimeSchema::los_angeles(), &cats).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_crime_csv("ID,Date,Latitude,Longitude\n1,x,0,0\n", &CrimeSchema::chicago(), &CategoryMap::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "Primary Type"));
    }

    #[test]
    fn mostly_garbage_is_a_schema_error() {
        let text = "ID,Date,Primary Type,Latitude,Longitude\n\
                    1,not a date,BATTERY,41.8,-87.6\n\
                    2,01/15/2016 10:30:00 PM,BATTERY,north,-87.6\n\
                    3,01/15/2016 10:30:00 PM,THEFT,41.9,-87.7\n";
        let err = parse_crime_csv(text, &CrimeSchema::chicago(), &CategoryMap::default()).unwrap_err();
        assert!(matches!(err, IngestError::TooManyDropped { dropped: 2, total: 3 }));
    }

    #[test]
    fn records_outside_the_year_are_dropped() {
        let text = "ID,Date,Primary Type,Latitude,Longitude\n\
                    1,12/31/2015 11:00:00 PM,BATTERY,41.8,-87.6\n\
                    2,01/01/2016 12:00:00 AM,BATTERY,41.8,-87.6\n\
                    3,01/01/2017 12:00:00 AM,BATTERY,41.8,-87.6\n";
        let p = parse_crime_csv(text, &CrimeSchema::chicago(), &CategoryMap::default()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.dropped_out_of_window, 2);
        let mut open = CrimeSchema::chicago();
        open.date_window = None;
        assert_eq!(parse_crime_csv(text, &open, &CategoryMap::default()).unwrap().records.len(), 3);
    }

    #[test]
    fn date_only_format() {
        let mut s = CrimeSchema::chicago();
        s.datetime_format = "%Y-%m-%d".into();
        let text = "ID,Date,Primary Type,Latitude,Longitude\n1,2016-03-04,ASSAULT,41.8,-87.6\n";
        let p = parse_crime_csv(text, &s, &CategoryMap::default()).unwrap();
        assert_eq!(p.records[0].timestamp.to_string(), "2016-03-04 00:00:00");
    }

    #[test]
    fn categorization_examples() {
        let m = CategoryMap::default();
        assert_eq!(categorize_crime("AGGRAVATED BATTERY", &m), Category::Personal);
        assert_eq!(categorize_crime("ROBBERY", &m), Category::Property);
        assert_eq!(categorize_crime("GAMBLING", &m), Category::Other);
    }

    #[test]
    fn first_matching_rule_wins() {
        let a = CategoryMap::new([("assault", Category::Personal), ("sexual", Category::Property)]);
        let b = CategoryMap::new([("sexual", Category::Property), ("assault", Category::Personal)]);
        assert_eq!(categorize_crime("Sexual Assault", &a), Category::Personal);
        assert_eq!(categorize_crime("Sexual Assault", &b), Category::Property);
    }
}
