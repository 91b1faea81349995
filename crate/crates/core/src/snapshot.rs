//! One day of observations of one variable, and input/target pairings.

use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::Variable;
use crate::error::{Error, Result};
use crate::geo::GeoCoord;

/// Stations reporting one variable on one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationSnapshot {
    date: NaiveDate,
    variable: Variable,
    station_ids: Vec<String>,
    coords: Vec<GeoCoord>,
    values: Vec<f64>,
}

impl StationSnapshot {
    pub fn new(
        date: NaiveDate,
        variable: Variable,
        station_ids: Vec<String>,
        coords: Vec<GeoCoord>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if station_ids.len() != coords.len() || coords.len() != values.len() {
            return Err(Error::Shape {
                context: "snapshot columns",
                expected: station_ids.len(),
                actual: if coords.len() != station_ids.len() {
                    coords.len()
                } else {
                    values.len()
                },
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("snapshot {date} has value {v}")));
        }
        let mut seen = HashSet::with_capacity(station_ids.len());
        if let Some(dup) = station_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Validation(format!(
                "snapshot {date} lists station {dup} twice"
            )));
        }
        Ok(StationSnapshot {
            date,
            variable,
            station_ids,
            coords,
            values,
        })
    }

    /// Snapshot with synthetic ids `"0", "1", ...`.
    pub fn from_coords(
        date: NaiveDate,
        variable: Variable,
        coords: Vec<GeoCoord>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let ids = (0..coords.len()).map(|i| i.to_string()).collect();
        Self::new(date, variable, ids, coords, values)
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    pub fn coords(&self) -> &[GeoCoord] {
        &self.coords
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same stations and coordinates with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.date,
            self.variable,
            self.station_ids.clone(),
            self.coords.clone(),
            values,
        )
    }

    /// Applies `f` to every value, keeping stations and coordinates.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        StationSnapshot {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Keeps the stations for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut out = StationSnapshot {
            date: self.date,
            variable: self.variable,
            station_ids: Vec::new(),
            coords: Vec::new(),
            values: Vec::new(),
        };
        for i in 0..self.len() {
            if keep(&self.station_ids[i]) {
                out.station_ids.push(self.station_ids[i].clone());
                out.coords.push(self.coords[i]);
                out.values.push(self.values[i]);
            }
        }
        out
    }
}

/// Consecutive input days followed by consecutive target days.
///
/// A single-step sample has one input and one target snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub inputs: Vec<StationSnapshot>,
    pub targets: Vec<StationSnapshot>,
}

impl Sample {
    pub fn single(input: StationSnapshot, target: StationSnapshot) -> Self {
        Sample {
            inputs: vec![input],
            targets: vec![target],
        }
    }

    /// Date of the last input day.
    pub fn issue_date(&self) -> NaiveDate {
        self.inputs.last().map(|s| s.date()).unwrap_or_default()
    }

    pub fn n_predictions(&self) -> usize {
        self.targets.iter().map(|t| t.len()).sum()
    }

    /// Applies `f` to every input and target value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Sample {
            inputs: self.inputs.iter().map(|s| s.map_values(f)).collect(),
            targets: self.targets.iter().map(|s| s.map_values(f)).collect(),
        }
    }

    /// Keeps the stations for which `keep` returns true, in every day.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> Self {
        Sample {
            inputs: self.inputs.iter().map(|s| s.filter(&keep)).collect(),
            targets: self.targets.iter().map(|s| s.filter(&keep)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() || self.targets.is_empty() {
            return Err(Error::Empty("sample without input or target days".into()));
        }
        if let Some(s) = self
            .inputs
            .iter()
            .chain(&self.targets)
            .find(|s| s.is_empty())
        {
            return Err(Error::Empty(format!(
                "snapshot for {} has no stations",
                s.date()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::make_geo;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, 1).unwrap()
    }

    #[test]
    fn rejects_bad_snapshots() {
        let c = vec![make_geo(0.0, 0.0).unwrap(), make_geo(1.0, 1.0).unwrap()];
        assert!(StationSnapshot::new(
            day(),
            Variable::Max,
            vec!["a".into()],
            c.clone(),
            vec![1.0, 2.0]
        )
        .is_err());
        assert!(StationSnapshot::new(
            day(),
            Variable::Max,
            vec!["a".into(), "a".into()],
            c.clone(),
            vec![1.0, 2.0]
        )
        .is_err());
        assert!(StationSnapshot::new(
            day(),
            Variable::Max,
            vec!["a".into(), "b".into()],
            c.clone(),
            vec![1.0, f64::NAN]
        )
        .is_err());
        let s = StationSnapshot::new(
            day(),
            Variable::Max,
            vec!["a".into(), "b".into()],
            c,
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_eq!(s.filter(|id| id == "b").values(), &[2.0]);
    }
}
