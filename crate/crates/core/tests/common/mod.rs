//! GSOD-format fixtures.
#![allow(dead_code)]

use std::path::Path;

pub const HEADER: &str = "\"STATION\",\"DATE\",\"LATITUDE\",\"LONGITUDE\",\"ELEVATION\",\"NAME\",\"TEMP\",\"TEMP_ATTRIBUTES\",\"DEWP\",\"DEWP_ATTRIBUTES\",\"SLP\",\"SLP_ATTRIBUTES\",\"STP\",\"STP_ATTRIBUTES\",\"VISIB\",\"VISIB_ATTRIBUTES\",\"WDSP\",\"WDSP_ATTRIBUTES\",\"MXSPD\",\"GUST\",\"MAX\",\"MAX_ATTRIBUTES\",\"MIN\",\"MIN_ATTRIBUTES\",\"PRCP\",\"PRCP_ATTRIBUTES\",\"SNDP\",\"FRSHTT\"";

/// One daily row; `max_f` and `min_f` in Fahrenheit, `None` writes the
/// missing-value marker.
pub struct Day<'a> {
    pub date: &'a str,
    pub max_f: Option<f64>,
    pub min_f: Option<f64>,
    pub slp: Option<f64>,
    pub wdsp: Option<f64>,
}

impl<'a> Day<'a> {
    pub fn max(date: &'a str, max_f: f64) -> Self {
        Day {
            date,
            max_f: Some(max_f),
            min_f: Some(max_f - 10.0),
            slp: Some(1013.2),
            wdsp: Some(5.5),
        }
    }
}

fn field(v: Option<f64>, sentinel: &str) -> String {
    v.map_or(sentinel.to_string(), |v| format!("{v:6.1}"))
}

pub fn station_csv(id: &str, lat: f64, lon: f64, days: &[Day]) -> String {
    let mut s = HEADER.to_string();
    for d in days {
        s.push_str(&format!(
            "\n\"{id}\",\"{}\",\"{lat}\",\"{lon}\",\"12.0\",\"SOMEWHERE, XX\",\"  40.0\",\"24\",\"  30.0\",\"24\",\"{}\",\"24\",\"999.9\",\"0\",\"  10.0\",\"24\",\"{}\",\"24\",\"  12.0\",\"999.9\",\"{}\",\"*\",\"{}\",\" \",\" 0.00\",\"G\",\"999.9\",\"000000\"",
            d.date,
            field(d.slp, "9999.9"),
            field(d.wdsp, "999.9"),
            field(d.max_f, "9999.9"),
            field(d.min_f, "9999.9"),
        ));
    }
    s.push('\n');
    s
}

pub fn write(path: &Path, text: &str) {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    std::fs::write(path, text).unwrap();
}

/// Fahrenheit for a Kelvin value.
pub fn f_of_k(k: f64) -> f64 {
    (k - 273.15) * 9.0 / 5.0 + 32.0
}
