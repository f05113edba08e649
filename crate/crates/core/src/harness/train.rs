use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::data::{best_loss, is_diverged};
use super::{require, Run, Summary};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fitting::derive_seed;
use crate::integrate::sample_times;
use crate::neural::{train, BranchNet, Checkpoint, EpochRecord, StopReason, TrainConfig, TrajectoryLoss};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub param_count: usize,
    pub epochs: usize,
    pub best_loss: f64,
    pub final_train_loss: f64,
    pub stop: StopReason,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub runs: Vec<ModelRun>,
    /// Best monitored loss over the runs that did not diverge.
    pub loss: Summary,
    pub converged: usize,
}

/// Trains one model per configured seed on the experiment's dataset.
///
/// A diverged run keeps its best parameters on disk; the remaining seeds
/// still run and the error is returned at the end.
pub fn train_models(run: &Run) -> Result<TrainSummary> {
    let c = &run.config;
    let dataset_path = run.dataset_path();
    require(&dataset_path, "dataset", "run gen-data first")?;
    let dataset = Dataset::load(&dataset_path)?;
    if dataset.basis != c.basis_descriptor() {
        return Err(Error::Config(format!(
            "dataset basis {:?} does not match the configured basis {:?}",
            dataset.basis,
            c.basis_descriptor()
        )));
    }
    let set = dataset.training_set();
    let basis = dataset.basis.build()?;
    let design = basis.design_matrix(&sample_times(c.dynamics.horizon, c.dynamics.step)?)?;
    let loss = TrajectoryLoss::new(&design, set.inputs.nrows());
    std::fs::create_dir_all(run.out.join("checkpoints"))?;

    let kind = c.network.kind;
    let mut runs = Vec::new();
    for &seed in &c.training.seeds {
        let ck_path = run.checkpoint_path(kind, seed);
        let config = TrainConfig {
            seed,
            ..c.training.optimizer.clone()
        };
        let init_seed = derive_seed(seed, "init");
        let (mut model, resume) = if c.training.resume && ck_path.exists() {
            let ck = Checkpoint::load(&ck_path)?;
            let optimizer = ck.optimizer.clone().ok_or_else(|| {
                Error::Config(format!("{} has no optimizer state to resume from", ck_path.display()))
            })?;
            (ck.model()?, Some((optimizer, ck.history)))
        } else {
            (c.build_model(kind, init_seed)?, None)
        };
        let report = train(&mut model, &set, &loss, &config, resume)?;

        let mut ck = Checkpoint::new(&model, dataset.basis, init_seed);
        ck.train_config = Some(config);
        ck.history = report.history.clone();
        ck.optimizer = Some(report.adam.clone());
        ck.save(&ck_path)?;
        let history = run.history_path(kind, seed);
        write_history(&history, &report.history)?;
        runs.push(ModelRun {
            seed,
            checkpoint: ck_path,
            history,
            param_count: model.param_count(),
            epochs: report.history.len(),
            best_loss: best_loss(&ck),
            final_train_loss: report.history.last().map_or(f64::NAN, |r| r.train_loss),
            stop: report.stop,
            seconds: report.history.last().map_or(0.0, |r| r.seconds),
        });
    }

    let good: Vec<f64> = runs.iter().filter(|r| !is_diverged(&r.stop)).map(|r| r.best_loss).collect();
    let summary = TrainSummary {
        loss: Summary::of(&good),
        converged: good.len(),
        runs,
    };
    run.write_json("train_summary.json", &summary)?;
    if let Some(bad) = summary.runs.iter().find(|r| is_diverged(&r.stop)) {
        return Err(Error::Diverged(format!(
            "seed {} ({:?}); best parameters kept in {}",
            bad.seed,
            bad.stop,
            bad.checkpoint.display()
        )));
    }
    Ok(summary)
}

fn write_history(path: &std::path::Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "validation_loss", "learning_rate", "seconds"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.validation_loss.map_or(String::new(), |v| v.to_string()),
            r.learning_rate.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
