use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ErrorSums, MetricsReport};
use crate::error::{Error, Result};

/// Longitude/latitude box in degrees. Several longitude intervals allow
/// boxes that cross the antimeridian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub lon: Vec<[f64; 2]>,
    pub lat: [f64; 2],
}

impl RegionSpec {
    pub fn new(name: &str, lon: Vec<[f64; 2]>, lat: [f64; 2]) -> Result<Self> {
        let r = RegionSpec {
            name: name.to_string(),
            lon,
            lat,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_interval = |[lo, hi]: [f64; 2], limit: f64| lo <= hi && lo >= -limit && hi <= limit;
        if self.lon.is_empty()
            || !self.lon.iter().all(|&i| ok_interval(i, 180.0))
            || !ok_interval(self.lat, 90.0)
        {
            return Err(Error::Validation(format!(
                "region {:?} has an invalid box",
                self.name
            )));
        }
        Ok(())
    }

    pub fn contains(&self, lon_deg: f64, lat_deg: f64) -> bool {
        let inside = |[lo, hi]: [f64; 2], v: f64| lo <= v && v <= hi;
        inside(self.lat, lat_deg) && self.lon.iter().any(|&i| inside(i, lon_deg))
    }
}

/// Coarse continental boxes for the sparse-region comparison.
pub fn default_regions() -> Vec<RegionSpec> {
    vec![
        RegionSpec::new("Africa", vec![[-20.0, 55.0]], [-35.0, 38.0]),
        RegionSpec::new("Asia", vec![[55.0, 180.0]], [5.0, 80.0]),
        RegionSpec::new("Australia", vec![[110.0, 155.0]], [-45.0, -10.0]),
        RegionSpec::new("South America", vec![[-82.0, -34.0]], [-56.0, 13.0]),
    ]
    .into_iter()
    .map(|r| r.expect("built-in boxes are valid"))
    .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionsFile {
    region: Vec<RegionSpec>,
}

/// Parses `[[region]]` tables with `name`, `lon` (list of intervals) and
/// `lat`.
pub fn parse_regions(text: &str) -> Result<Vec<RegionSpec>> {
    let file: RegionsFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for r in &file.region {
        r.validate()?;
    }
    Ok(file.region)
}

pub fn load_regions(path: &Path) -> Result<Vec<RegionSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_regions(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub name: String,
    pub errors: ErrorSums,
}

pub const OTHER_REGION: &str = "other";

/// Assigns each station's predictions to the first region containing it;
/// the rest go to a final `"other"` entry.
pub fn regional_breakdown(report: &MetricsReport, regions: &[RegionSpec]) -> Vec<RegionMetrics> {
    let mut out: Vec<RegionMetrics> = regions
        .iter()
        .map(|r| r.name.as_str())
        .chain([OTHER_REGION])
        .map(|name| RegionMetrics {
            name: name.to_string(),
            errors: ErrorSums::default(),
        })
        .collect();
    for s in &report.stations {
        let i = regions
            .iter()
            .position(|r| r.contains(s.lon_deg, s.lat_deg))
            .unwrap_or(regions.len());
        out[i].errors.merge(&s.errors);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_in_box() {
        let regions = default_regions();
        let africa = &regions[0];
        assert!(africa.contains(20.0, 0.0));
        assert!(!africa.contains(60.0, 0.0));
        assert!(regions[1].contains(100.0, 40.0));
        assert!(RegionSpec::new("bad", vec![[10.0, 5.0]], [0.0, 1.0]).is_err());
        assert!(RegionSpec::new("bad", vec![[0.0, 5.0]], [0.0, 91.0]).is_err());
    }

    #[test]
    fn regions_file() {
        let text = r#"
            [[region]]
            name = "Pacific"
            lon = [[150.0, 180.0], [-180.0, -120.0]]
            lat = [-30.0, 30.0]
        "#;
        let r = parse_regions(text).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].contains(-170.0, 0.0));
        assert!(r[0].contains(170.0, 0.0));
        assert!(!r[0].contains(0.0, 0.0));
        assert!(
            parse_regions("[[region]]\nname = \"x\"\nlon = [[0.0, 1.0]]\nlat = [5.0, 1.0]\n")
                .is_err()
        );
    }
}
