use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geo::{knn_edges_with, GeoCoord};
use crate::model::{MeshContext, MignModel, PreparedSample};
use crate::par::Execution;
use crate::snapshot::{Sample, StationSnapshot};

/// Forecast for every target day of a sample, in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub steps: Vec<Vec<f64>>,
    /// Predictions that had to use a substitute value.
    pub fallbacks: usize,
}

/// Anything that turns a sample's input days into target-day predictions.
pub trait Forecaster: Sync {
    fn forecast(&self, sample: &Sample) -> Result<Prediction>;
}

/// Tomorrow equals today at each target station. Stations that did not
/// report on the last input day take the value of the nearest station that
/// did.
pub fn persistence_forecast(
    today: &StationSnapshot,
    target: &StationSnapshot,
) -> Result<(Vec<f64>, usize)> {
    if today.is_empty() {
        return Err(Error::Empty(format!("no observations on {}", today.date())));
    }
    if today.variable() != target.variable() {
        return Err(Error::Validation(format!(
            "persistence across variables {} and {}",
            today.variable(),
            target.variable()
        )));
    }
    let by_id: HashMap<&str, usize> = today
        .station_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut out = vec![0.0; target.len()];
    let mut missing = Vec::new();
    for (i, id) in target.station_ids().iter().enumerate() {
        match by_id.get(id.as_str()) {
            Some(&j) => out[i] = today.values()[j],
            None => missing.push(i),
        }
    }
    if !missing.is_empty() {
        let coords: Vec<GeoCoord> = missing.iter().map(|&i| target.coords()[i]).collect();
        let nearest = knn_edges_with(today.coords(), &coords, 1, Execution::Sequential)?;
        for (k, &i) in missing.iter().enumerate() {
            out[i] = today.values()[nearest.sources_of(k)[0]];
        }
    }
    Ok((out, missing.len()))
}

/// Parameter-free persistence baseline; every target day repeats the last
/// input day.
#[derive(Clone, Copy, Debug, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn forecast(&self, sample: &Sample) -> Result<Prediction> {
        sample.validate()?;
        let today = sample.inputs.last().expect("validated");
        let mut steps = Vec::with_capacity(sample.targets.len());
        let mut fallbacks = 0;
        for target in &sample.targets {
            let (p, f) = persistence_forecast(today, target)?;
            steps.push(p);
            fallbacks += f;
        }
        Ok(Prediction { steps, fallbacks })
    }
}

/// A trained network. Inputs are normalized with the model's statistics
/// and predictions mapped back to physical units.
#[derive(Clone, Copy)]
pub struct MignForecaster<'a> {
    pub model: &'a MignModel,
    pub mesh: &'a MeshContext,
}

impl Forecaster for MignForecaster<'_> {
    fn forecast(&self, sample: &Sample) -> Result<Prediction> {
        let norm = self.model.norm();
        let prepared = PreparedSample::new(&sample.map_values(|v| norm.normalize(v)), self.mesh)?;
        let steps = self
            .model
            .predict(&prepared, self.mesh)?
            .into_iter()
            .map(|p| p.into_iter().map(|v| norm.denormalize(v)).collect())
            .collect();
        Ok(Prediction {
            steps,
            fallbacks: 0,
        })
    }
}

/// Feeds each step's predictions back as the next step's input, starting
/// from `today`. Values are in the model's normalized units.
pub fn autoregressive_rollout(
    model: &MignModel,
    today: &StationSnapshot,
    target_sets: &[Vec<GeoCoord>],
    mesh: &MeshContext,
) -> Result<Vec<Vec<f64>>> {
    if model.config().has_temporal_head() {
        return Err(Error::Config(
            "rollout needs a single-step model without a temporal head".into(),
        ));
    }
    if target_sets.is_empty() {
        return Err(Error::Validation("rollout needs at least one step".into()));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(target_sets.len());
    for (step, targets) in target_sets.iter().enumerate() {
        if targets.is_empty() {
            return Err(Error::Empty(format!(
                "rollout step {} has no target stations",
                step + 1
            )));
        }
        let pred = match out.last() {
            None => model.forward(today, targets, mesh)?,
            Some(prev) => model.forward_values(prev, &target_sets[step - 1], targets, mesh)?,
        };
        out.push(pred);
    }
    Ok(out)
}

/// Rollout over a sample's target days from its last input day.
#[derive(Clone, Copy)]
pub struct RolloutForecaster<'a> {
    pub model: &'a MignModel,
    pub mesh: &'a MeshContext,
}

impl Forecaster for RolloutForecaster<'_> {
    fn forecast(&self, sample: &Sample) -> Result<Prediction> {
        sample.validate()?;
        let norm = self.model.norm();
        let today = sample
            .inputs
            .last()
            .expect("validated")
            .map_values(|v| norm.normalize(v));
        let sets: Vec<Vec<GeoCoord>> = sample.targets.iter().map(|t| t.coords().to_vec()).collect();
        let steps = autoregressive_rollout(self.model, &today, &sets, self.mesh)?
            .into_iter()
            .map(|p| p.into_iter().map(|v| norm.denormalize(v)).collect())
            .collect();
        Ok(Prediction {
            steps,
            fallbacks: 0,
        })
    }
}
