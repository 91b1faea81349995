use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Value};

use super::metrics::MetricsReport;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    GeoJson,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "geojson" | "json" => Ok(ExportFormat::GeoJson),
            _ => Err(Error::Config(format!("unknown export format {s:?}"))),
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Per-station errors as a GeoJSON FeatureCollection of points.
pub fn station_errors_geojson(report: &MetricsReport) -> Value {
    let features: Vec<Value> = report
        .stations
        .iter()
        .map(|s| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.lon_deg, s.lat_deg]},
                "properties": {
                    "station_id": s.station_id,
                    "mae": s.errors.mae(),
                    "mse": s.errors.mse(),
                    "n_predictions": s.errors.n,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Writes `station_id, lon_deg, lat_deg, mae, n_predictions` per station.
pub fn export_station_errors(
    report: &MetricsReport,
    path: &Path,
    format: ExportFormat,
) -> Result<()> {
    match format {
        ExportFormat::GeoJson => {
            let text =
                serde_json::to_string_pretty(&station_errors_geojson(report)).expect("json value");
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
            w.write_record(["station_id", "lon_deg", "lat_deg", "mae", "n_predictions"])
                .map_err(|e| csv_err(path, e))?;
            for s in &report.stations {
                w.write_record([
                    s.station_id.clone(),
                    s.lon_deg.to_string(),
                    s.lat_deg.to_string(),
                    s.errors.mae().to_string(),
                    s.errors.n.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

/// One CSV row per prediction; requires a report built with
/// `keep_predictions`.
pub fn export_predictions(report: &MetricsReport, path: &Path) -> Result<()> {
    let records = report
        .predictions
        .as_ref()
        .ok_or_else(|| Error::Validation("report holds no per-prediction records".into()))?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "sample",
        "step",
        "date",
        "station_id",
        "lon_deg",
        "lat_deg",
        "truth",
        "prediction",
        "error",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.sample.to_string(),
            r.step.to_string(),
            r.date.to_string(),
            r.station_id.clone(),
            r.lon_deg.to_string(),
            r.lat_deg.to_string(),
            r.truth.to_string(),
            r.prediction.to_string(),
            r.error().to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
