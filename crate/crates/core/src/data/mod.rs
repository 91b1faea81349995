//! GSOD ingestion, daily snapshots, sample windows and dataset splits.

mod cache;
mod dataset;
mod gsod;
mod ingest;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{read_cache, write_cache, CacheKey, PARSER_VERSION};
pub(crate) use dataset::norm_stats_of;
pub use dataset::{
    build_dataset, build_snapshot, compute_norm_stats, split_stations, DateRange, SampleIndex,
    SnapshotReport, Splits, Window,
};
pub use gsod::{fahrenheit_to_kelvin, parse_gsod_file, ParseOutput, ParseReport, StationRecord};
pub use ingest::{
    ingest_dir, list_input_files, load_or_ingest, year_coverage, IngestReport, YearCoverage,
};
pub use store::RecordStore;

/// The six daily GSOD variables used for forecasting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variable {
    /// Maximum temperature, K.
    Max,
    /// Minimum temperature, K.
    Min,
    /// Mean dew point, K.
    Dewp,
    /// Mean sea-level pressure, mb.
    Slp,
    /// Mean wind speed, kn.
    Wdsp,
    /// Maximum sustained wind speed, kn.
    Mxspd,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::Max,
        Variable::Min,
        Variable::Dewp,
        Variable::Slp,
        Variable::Wdsp,
        Variable::Mxspd,
    ];

    /// GSOD CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            Variable::Max => "MAX",
            Variable::Min => "MIN",
            Variable::Dewp => "DEWP",
            Variable::Slp => "SLP",
            Variable::Wdsp => "WDSP",
            Variable::Mxspd => "MXSPD",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Variable::Max | Variable::Min | Variable::Dewp => "K",
            Variable::Slp => "mb",
            Variable::Wdsp | Variable::Mxspd => "kn",
        }
    }

    pub fn is_temperature(self) -> bool {
        matches!(self, Variable::Max | Variable::Min | Variable::Dewp)
    }

    /// GSOD missing-value marker, in the file's native units.
    pub fn sentinel(self) -> f64 {
        match self {
            Variable::Wdsp | Variable::Mxspd => 999.9,
            _ => 9999.9,
        }
    }

    /// Inclusive physical sanity bounds in converted units.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Variable::Max | Variable::Min | Variable::Dewp => (160.0, 350.0),
            Variable::Slp => (850.0, 1100.0),
            Variable::Wdsp | Variable::Mxspd => (0.0, 200.0),
        }
    }

    pub fn in_bounds(self, value: f64) -> bool {
        let (lo, hi) = self.bounds();
        value.is_finite() && (lo..=hi).contains(&value)
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match key.as_str() {
            "MAX" | "MAXTEMP" => Ok(Variable::Max),
            "MIN" | "MINTEMP" => Ok(Variable::Min),
            "DEWP" => Ok(Variable::Dewp),
            "SLP" => Ok(Variable::Slp),
            "WDSP" => Ok(Variable::Wdsp),
            "MXSPD" => Ok(Variable::Mxspd),
            _ => Err(Error::Config(format!("unknown variable {s:?}"))),
        }
    }
}

/// z-score statistics of one variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        mean: 0.0,
        std: 1.0,
    };

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

impl Default for NormStats {
    fn default() -> Self {
        Self::IDENTITY
    }
}
