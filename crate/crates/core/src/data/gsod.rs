//! Parser for NOAA GSOD per-station-year CSV files.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Variable;
use crate::error::{Error, Result};
use crate::geo::{make_geo, GeoCoord};

/// One station-day with all six variables, converted to K / mb / kn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub date: NaiveDate,
    pub coord: GeoCoord,
    /// Indexed in [`Variable::ALL`] order; `None` when missing or implausible.
    pub values: [Option<f64>; 6],
}

impl StationRecord {
    pub fn value(&self, v: Variable) -> Option<f64> {
        self.values[v.index()]
    }
}

/// Row accounting for one or more files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub files: usize,
    pub rows: usize,
    pub records: usize,
    /// Rows that could not be read (bad field count, bad date, empty id).
    pub malformed_rows: usize,
    /// Rows dropped for missing or invalid coordinates.
    pub bad_coordinates: usize,
    /// Values equal to the GSOD missing marker.
    pub sentinels: usize,
    /// Values that were not numbers.
    pub unparsable_values: usize,
    /// Values outside the physical sanity bounds.
    pub out_of_bounds: usize,
}

impl ParseReport {
    pub fn merge(&mut self, other: &ParseReport) {
        self.files += other.files;
        self.rows += other.rows;
        self.records += other.records;
        self.malformed_rows += other.malformed_rows;
        self.bad_coordinates += other.bad_coordinates;
        self.sentinels += other.sentinels;
        self.unparsable_values += other.unparsable_values;
        self.out_of_bounds += other.out_of_bounds;
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParseOutput {
    pub records: Vec<StationRecord>,
    pub report: ParseReport,
}

const ID_COLUMNS: [&str; 4] = ["STATION", "DATE", "LATITUDE", "LONGITUDE"];

pub fn fahrenheit_to_kelvin(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0 + 273.15
}

enum Field {
    Value(f64),
    Sentinel,
    Unparsable,
}

fn parse_field(raw: &str, v: Variable) -> Field {
    let s = raw.trim().trim_end_matches('*').trim();
    if s.is_empty() {
        return Field::Unparsable;
    }
    match s.parse::<f64>() {
        Ok(x) if x == v.sentinel() => Field::Sentinel,
        Ok(x) if x.is_finite() => Field::Value(if v.is_temperature() {
            fahrenheit_to_kelvin(x)
        } else {
            x
        }),
        _ => Field::Unparsable,
    }
}

/// Parses one file's text. `name` is used in error messages only.
///
/// A header lacking any required column fails the whole file; unreadable
/// rows are skipped and counted.
pub fn parse_gsod_file(content: &str, name: &str) -> Result<ParseOutput> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format(name, format!("unreadable header: {e}")))?
        .clone();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h.trim_matches('"') == col)
            .ok_or_else(|| Error::format(name, format!("header lacks column {col}")))
    };
    let [station, date, lat, lon] = [
        find(ID_COLUMNS[0])?,
        find(ID_COLUMNS[1])?,
        find(ID_COLUMNS[2])?,
        find(ID_COLUMNS[3])?,
    ];
    let mut var_cols = [0usize; 6];
    for v in Variable::ALL {
        var_cols[v.index()] = find(v.column())?;
    }

    let mut out = ParseOutput::default();
    out.report.files = 1;
    for row in reader.records() {
        out.report.rows += 1;
        let Ok(row) = row else {
            out.report.malformed_rows += 1;
            continue;
        };
        if row.len() != headers.len() {
            out.report.malformed_rows += 1;
            continue;
        }
        let id = row[station].trim();
        let day = NaiveDate::parse_from_str(row[date].trim(), "%Y-%m-%d");
        let (false, Ok(day)) = (id.is_empty(), day) else {
            out.report.malformed_rows += 1;
            continue;
        };
        let coord = match (
            row[lat].trim().parse::<f64>(),
            row[lon].trim().parse::<f64>(),
        ) {
            (Ok(la), Ok(lo)) if la.is_finite() && lo.is_finite() => make_geo(lo, la).ok(),
            _ => None,
        };
        let Some(coord) = coord else {
            out.report.bad_coordinates += 1;
            continue;
        };
        let mut values = [None; 6];
        for v in Variable::ALL {
            values[v.index()] = match parse_field(&row[var_cols[v.index()]], v) {
                Field::Value(x) if v.in_bounds(x) => Some(x),
                Field::Value(_) => {
                    out.report.out_of_bounds += 1;
                    None
                }
                Field::Sentinel => {
                    out.report.sentinels += 1;
                    None
                }
                Field::Unparsable => {
                    out.report.unparsable_values += 1;
                    None
                }
            };
        }
        out.records.push(StationRecord {
            station_id: id.to_string(),
            date: day,
            coord,
            values,
        });
    }
    out.report.records = out.records.len();
    Ok(out)
}
