use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::forecast::Forecaster;
use super::regions::RegionMetrics;
use crate::data::Variable;
use crate::error::{Error, Result};
use crate::par::{map_slice, Execution};
use crate::snapshot::Sample;

/// Squared and absolute error totals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSums {
    pub n: usize,
    pub sq: f64,
    pub abs: f64,
}

impl ErrorSums {
    pub fn add(&mut self, err: f64) {
        self.n += 1;
        self.sq += err * err;
        self.abs += err.abs();
    }

    pub fn merge(&mut self, o: &ErrorSums) {
        self.n += o.n;
        self.sq += o.sq;
        self.abs += o.abs;
    }

    /// `NaN` when empty.
    pub fn mse(&self) -> f64 {
        self.sq / self.n as f64
    }

    pub fn mae(&self) -> f64 {
        self.abs / self.n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample: usize,
    /// Forecast day, starting at 1.
    pub step: usize,
    pub date: NaiveDate,
    pub station_id: String,
    pub lon_deg: f64,
    pub lat_deg: f64,
    pub truth: f64,
    pub prediction: f64,
}

impl PredictionRecord {
    pub fn error(&self) -> f64 {
        self.prediction - self.truth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub issue_date: NaiveDate,
    pub errors: ErrorSums,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationErrors {
    pub station_id: String,
    /// Coordinates at the station's first prediction.
    pub lon_deg: f64,
    pub lat_deg: f64,
    pub errors: ErrorSums,
}

/// Errors of a forecaster over a set of samples, in physical units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub forecaster: String,
    pub variable: Option<Variable>,
    pub total: ErrorSums,
    pub samples: Vec<SampleMetrics>,
    /// Index `i` holds forecast day `i + 1`.
    pub steps: Vec<ErrorSums>,
    /// Sorted by station id.
    pub stations: Vec<StationErrors>,
    pub fallbacks: usize,
    #[serde(default)]
    pub regions: Vec<RegionMetrics>,
    /// Only kept when requested.
    #[serde(default)]
    pub predictions: Option<Vec<PredictionRecord>>,
}

impl MetricsReport {
    pub fn mse(&self) -> f64 {
        self.total.mse()
    }

    pub fn mae(&self) -> f64 {
        self.total.mae()
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.total.n == 0 {
            0.0
        } else {
            self.fallbacks as f64 / self.total.n as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = self.variable.map_or("", |v| v.unit());
        let var = self.variable.map_or("-".to_string(), |v| v.to_string());
        writeln!(f, "forecaster   {}", self.forecaster)?;
        writeln!(f, "variable     {var}")?;
        writeln!(f, "samples      {}", self.samples.len())?;
        writeln!(f, "predictions  {}", self.total.n)?;
        writeln!(f, "stations     {}", self.stations.len())?;
        writeln!(f, "MSE          {:.4} {unit}^2", self.mse())?;
        writeln!(f, "MAE          {:.4} {unit}", self.mae())?;
        if self.fallbacks > 0 {
            writeln!(
                f,
                "fallbacks    {} ({:.2}%)",
                self.fallbacks,
                100.0 * self.fallback_fraction()
            )?;
        }
        if self.steps.len() > 1 {
            writeln!(f, "\n{:>5} {:>10} {:>10} {:>10}", "step", "n", "MSE", "MAE")?;
            for (i, s) in self.steps.iter().enumerate() {
                writeln!(
                    f,
                    "{:>5} {:>10} {:>10.4} {:>10.4}",
                    i + 1,
                    s.n,
                    s.mse(),
                    s.mae()
                )?;
            }
        }
        if !self.regions.is_empty() {
            writeln!(
                f,
                "\n{:<16} {:>10} {:>10} {:>10}",
                "region", "n", "MSE", "MAE"
            )?;
            for r in &self.regions {
                writeln!(
                    f,
                    "{:<16} {:>10} {:>10.4} {:>10.4}",
                    r.name,
                    r.errors.n,
                    r.errors.mse(),
                    r.errors.mae()
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    pub execution: Execution,
    /// Keep one [`PredictionRecord`] per prediction.
    pub keep_predictions: bool,
}

/// Runs `forecaster` on every sample and accumulates errors in sample order,
/// so the report is independent of the execution mode.
pub fn evaluate<F: Forecaster + ?Sized>(
    forecaster: &F,
    name: &str,
    samples: &[Sample],
    opts: EvalOptions,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Empty("nothing to evaluate".into()));
    }
    let outputs = map_slice(opts.execution, samples, |s| forecaster.forecast(s));
    let mut report = MetricsReport {
        forecaster: name.to_string(),
        variable: samples[0].targets.first().map(|t| t.variable()),
        ..Default::default()
    };
    let mut stations: BTreeMap<String, StationErrors> = BTreeMap::new();
    let mut records = opts.keep_predictions.then(Vec::new);
    for (i, (sample, out)) in samples.iter().zip(outputs).enumerate() {
        let out = out?;
        if out.steps.len() != sample.targets.len() {
            return Err(Error::Shape {
                context: "forecast steps",
                expected: sample.targets.len(),
                actual: out.steps.len(),
            });
        }
        let mut sums = ErrorSums::default();
        for (step, (target, pred)) in sample.targets.iter().zip(&out.steps).enumerate() {
            if pred.len() != target.len() {
                return Err(Error::Shape {
                    context: "forecast stations",
                    expected: target.len(),
                    actual: pred.len(),
                });
            }
            if report.steps.len() <= step {
                report.steps.resize(step + 1, ErrorSums::default());
            }
            for (j, (&p, &t)) in pred.iter().zip(target.values()).enumerate() {
                if !p.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "prediction for sample {i} step {} station {}",
                        step + 1,
                        target.station_ids()[j]
                    )));
                }
                let err = p - t;
                sums.add(err);
                report.steps[step].add(err);
                let id = &target.station_ids()[j];
                let c = target.coords()[j];
                stations
                    .entry(id.clone())
                    .or_insert_with(|| StationErrors {
                        station_id: id.clone(),
                        lon_deg: c.lon_deg(),
                        lat_deg: c.lat_deg(),
                        errors: ErrorSums::default(),
                    })
                    .errors
                    .add(err);
                if let Some(recs) = records.as_mut() {
                    recs.push(PredictionRecord {
                        sample: i,
                        step: step + 1,
                        date: target.date(),
                        station_id: id.clone(),
                        lon_deg: c.lon_deg(),
                        lat_deg: c.lat_deg(),
                        truth: t,
                        prediction: p,
                    });
                }
            }
        }
        report.total.merge(&sums);
        report.fallbacks += out.fallbacks;
        report.samples.push(SampleMetrics {
            issue_date: sample.issue_date(),
            errors: sums,
        });
    }
    report.stations = stations.into_values().collect();
    report.predictions = records;
    Ok(report)
}
