use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{loss_and_grad, sse};
use crate::data::{norm_stats_of, NormStats, Splits, Variable};
use crate::error::{Error, Result};
use crate::model::{MeshContext, MignModel, ModelConfig, PreparedSample};
use crate::par::{map_slice, tree_reduce, Execution};
use crate::snapshot::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub variable: Variable,
    pub splits: Splits,
    pub execution: Execution,
    /// Record elapsed time in the history; off gives reproducible files.
    pub record_timing: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 4,
            max_epochs: 100,
            patience: 10,
            max_steps: None,
            seed: 0,
            variable: Variable::Max,
            splits: Splits::default(),
            execution: Execution::default(),
            record_timing: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        self.model.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Samples in physical units; normalization happens inside [`train`].
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    /// Computed from the training targets when absent.
    pub norm: Option<NormStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error over the epoch's batches, physical units.
    pub train_mse: f64,
    /// Validation mean squared error after the epoch, physical units.
    pub val_mse: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse,wall_seconds\n");
        for r in &self.epochs {
            let val = r.val_mse.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch, r.train_mse, val, r.wall_seconds
            )
            .expect("string write");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation error.
    pub model: MignModel,
    pub history: History,
    pub best_epoch: usize,
    pub steps: u64,
}

/// Population mean and standard deviation of all target values.
pub fn norm_from_samples(samples: &[Sample]) -> Result<NormStats> {
    let values = samples
        .iter()
        .flat_map(|s| s.targets.iter())
        .flat_map(|t| t.values().iter().copied());
    norm_stats_of(values)
        .ok_or_else(|| Error::Empty("need at least two target values for normalization".into()))
}

pub(crate) fn prepare(
    samples: &[Sample],
    norm: NormStats,
    mesh: &MeshContext,
    exec: Execution,
) -> Result<Vec<PreparedSample>> {
    map_slice(exec, samples, |s| {
        PreparedSample::new(&s.map_values(|v| norm.normalize(v)), mesh)
    })
    .into_iter()
    .collect()
}

/// Mean squared error over all predictions, in normalized units.
pub(crate) fn dataset_mse(
    model: &MignModel,
    set: &[PreparedSample],
    mesh: &MeshContext,
    exec: Execution,
) -> Result<f64> {
    let parts = map_slice(exec, set, |s| -> Result<(f64, usize)> {
        let pred = model.predict(s, mesh)?;
        let total = pred.iter().zip(&s.truth).map(|(p, t)| sse(p, t)).sum();
        Ok((total, s.n_predictions()))
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let (total, n) = tree_reduce(parts, |a, b| (a.0 + b.0, a.1 + b.1)).unwrap_or((0.0, 0));
    if n == 0 {
        return Err(Error::Empty("no predictions to score".into()));
    }
    Ok(total / n as f64)
}

pub fn train(config: &TrainConfig, data: &TrainingSet, mesh: &MeshContext) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Empty("training set has no samples".into()));
    }
    let norm = match data.norm {
        Some(n) => n,
        None => norm_from_samples(&data.train)?,
    };
    let exec = config.execution;
    let mut model = MignModel::new(config.model.clone(), config.seed)?;
    model.set_norm(norm);
    model.set_variable(Some(config.variable));
    let train_set = prepare(&data.train, norm, mesh, exec)?;
    let val_set = prepare(&data.val, norm, mesh, exec)?;
    let to_physical = norm.std * norm.std;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, usize, MignModel)> = None;
    let mut since_best = 0;
    let mut steps = 0u64;
    let start = Instant::now();

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        let mut epoch_n = 0usize;
        let mut capped = false;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = loss_and_grad(&model, &batch, mesh, exec)?;
            let n: usize = batch.iter().map(|s| s.n_predictions()).sum();
            epoch_sse += loss * n as f64;
            epoch_n += n;
            adam_step(&mut model, &grads, &mut adam, config.learning_rate)?;
            steps += 1;
            if config.max_steps.is_some_and(|cap| steps >= cap) {
                capped = true;
                break;
            }
        }
        let train_mse = epoch_sse / epoch_n as f64 * to_physical;
        let val_mse = if val_set.is_empty() {
            None
        } else {
            Some(dataset_mse(&model, &val_set, mesh, exec)? * to_physical)
        };
        let wall_seconds = if config.record_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        log::info!(
            "epoch {epoch}: train_mse {train_mse:.6} val_mse {} steps {steps}",
            val_mse.map_or("-".to_string(), |v| format!("{v:.6}"))
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            wall_seconds,
        });
        let score = val_mse.unwrap_or(train_mse);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break 'epochs;
            }
        }
        if capped {
            break;
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        steps,
    })
}
