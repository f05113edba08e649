use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, BranchModel, BranchNet, TrajectoryLoss};
use crate::error::{Error, Result};
use crate::fitting::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Learning rate reached at `max_epochs` by geometric decay; constant when unset.
    pub final_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Wall-clock budget in seconds.
    pub max_seconds: Option<f64>,
    /// Stop once the monitored loss (validation when present) reaches this value.
    pub target_loss: f64,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            final_learning_rate: None,
            batch_size: 256,
            max_epochs: 1000,
            max_seconds: Some(7200.0),
            target_loss: 1e-5,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Parameter("batch size and epoch budget must be positive".into()));
        }
        if self.max_seconds.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Parameter("time budget must be positive".into()));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            Some(end) if self.max_epochs > 1 => {
                let frac = (epoch as f64 / (self.max_epochs - 1) as f64).min(1.0);
                self.adam.learning_rate * (end / self.adam.learning_rate).powf(frac)
            }
            _ => self.adam.learning_rate,
        }
    }
}

/// Inputs (`n × M`) and least-squares control point targets (`n·ℓ × M`).
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.ncols() == 0
    }

    pub fn select(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select_columns(idx),
        }
    }

    /// Seeded train/validation partition of record indices.
    pub fn split(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "split")));
        let mut val = (self.len() as f64 * fraction).round() as usize;
        if self.len() >= 2 && fraction > 0.0 {
            val = val.clamp(1, self.len() - 1);
        } else if self.len() < 2 {
            val = 0;
        }
        let train = idx.split_off(val);
        (train, idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub learning_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    EpochBudget,
    TimeBudget,
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_loss: f64,
    pub stop: StopReason,
    pub adam: AdamState,
}

impl TrainReport {
    pub fn final_validation_loss(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.validation_loss)
    }
}

/// Mean trajectory loss of `model` over `set`.
pub fn evaluate_loss(model: &dyn BranchNet, set: &TrainingSet, loss: &TrajectoryLoss) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let out = model.forward_batch(&set.inputs)?;
    Ok(loss.eval(&out, &set.targets).0)
}

/// Mini-batch Adam on the trajectory loss.
///
/// On return the model holds the parameters with the best monitored loss.
/// Divergence is reported through [`StopReason::Diverged`] rather than an
/// error so the caller can still save the best parameters.
pub fn train(
    model: &mut BranchModel,
    set: &TrainingSet,
    loss: &TrajectoryLoss,
    config: &TrainConfig,
    resume: Option<(AdamState, Vec<EpochRecord>)>,
) -> Result<TrainReport> {
    config.validate()?;
    let (dims, len) = model.output_shape();
    if set.targets.nrows() != dims * len || set.inputs.nrows() != model.input_dim() {
        return Err(Error::Shape {
            expected: format!("{} inputs and {} targets per record", model.input_dim(), dims * len),
            found: format!("{} and {}", set.inputs.nrows(), set.targets.nrows()),
        });
    }
    if loss.len() != len {
        return Err(Error::Shape {
            expected: format!("loss over {len} control points"),
            found: loss.len().to_string(),
        });
    }
    if set.is_empty() {
        return Err(Error::Parameter("empty training set".into()));
    }

    let (train_idx, val_idx) = set.split(config.validation_fraction, config.seed);
    let train_set = set.select(&train_idx);
    let val_set = set.select(&val_idx);

    let (mut adam, mut history) = resume.unwrap_or_else(|| (AdamState::new(model.param_count()), Vec::new()));
    if adam.m.len() != model.param_count() {
        return Err(Error::Shape {
            expected: format!("optimizer state for {} parameters", model.param_count()),
            found: adam.m.len().to_string(),
        });
    }
    let first_epoch = history.last().map_or(0, |r| r.epoch + 1);
    let monitored = |r: &EpochRecord| r.validation_loss.unwrap_or(r.train_loss);
    let mut best_loss = history.iter().map(monitored).fold(f64::INFINITY, f64::min);
    let mut best_epoch = None;
    let mut best_params = model.params().to_vec();

    let start = Instant::now();
    let shuffle_seed = derive_seed(config.seed, "epoch");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stop = StopReason::EpochBudget;

    'epochs: for epoch in first_epoch..first_epoch + config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let step_config = AdamConfig {
            learning_rate: config.learning_rate(epoch - first_epoch),
            ..config.adam
        };
        for chunk in order.chunks(config.batch_size) {
            let batch = train_set.select(chunk);
            let (value, grad) = model.loss_and_grad(&batch.inputs, &mut |out| loss.eval(out, &batch.targets))?;
            if !value.is_finite() {
                stop = StopReason::Diverged(format!("loss became {value} in epoch {epoch}"));
                break 'epochs;
            }
            if let Err(e) = adam_step(model.params_mut(), &grad, &mut adam, &step_config) {
                stop = StopReason::Diverged(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
        }

        let train_loss = evaluate_loss(model, &train_set, loss)?;
        let validation_loss = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_loss(model, &val_set, loss)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            learning_rate: step_config.learning_rate,
            seconds: start.elapsed().as_secs_f64(),
        };
        let current = monitored(&record);
        history.push(record);
        if !current.is_finite() {
            stop = StopReason::Diverged(format!("monitored loss became {current} in epoch {epoch}"));
            break;
        }
        if current < best_loss {
            best_loss = current;
            best_epoch = Some(epoch);
            best_params.copy_from_slice(model.params());
        }
        if current <= config.target_loss {
            stop = StopReason::TargetReached;
            break;
        }
        if config.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
            stop = StopReason::TimeBudget;
            break;
        }
    }

    if best_epoch.is_some() || matches!(stop, StopReason::Diverged(_)) {
        model.params_mut().copy_from_slice(&best_params);
    }
    Ok(TrainReport {
        history,
        best_epoch,
        best_loss,
        stop,
        adam,
    })
}
