//! Experiment harness behind the `splineop` binary.
//!
//! Every command reads an [`ExperimentConfig`] and works inside one output
//! directory:
//!
//! ```text
//! <out>/dataset.json                     gen-data
//! <out>/checkpoints/<kind>_seed<S>.json  train
//! <out>/loss_history_<kind>_seed<S>.csv  train
//! <out>/train_summary.json               train
//! <out>/eval_records.csv, eval_report.json
//! <out>/rot_eval.csv, rot_eval.json
//! <out>/bench.csv, bench.json
//! ```

mod bench;
mod config;
mod data;
mod eval;
mod stats;
mod train;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use bench::{bench, BenchReport, BenchRow, Hardware};
pub use config::{
    BasisConfig, BenchConfig, EvaluationConfig, ExperimentConfig, NetworkConfig, NetworkKind, RotationSweep,
    SamplingConfig, TrainingConfig,
};
pub use data::{gen_data, show, GenDataReport};
pub use eval::{eval, rot_eval, test_records, EvalReport, RotationReport};
pub use stats::{pearson, Pearson, Summary};
pub use train::{train_models, ModelRun, TrainSummary};

use crate::error::{Error, Result};

/// A configuration bound to an output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self> {
        let out = out.into();
        std::fs::create_dir_all(&out)?;
        Ok(Self { config, out })
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.config
            .sampling
            .dataset
            .clone()
            .unwrap_or_else(|| self.out.join("dataset.json"))
    }

    pub fn checkpoint_path(&self, kind: NetworkKind, seed: u64) -> PathBuf {
        self.out.join("checkpoints").join(format!("{}_seed{seed}.json", kind_name(kind)))
    }

    pub fn history_path(&self, kind: NetworkKind, seed: u64) -> PathBuf {
        self.out.join(format!("loss_history_{}_seed{seed}.csv", kind_name(kind)))
    }

    /// Checkpoint used by eval and rot-eval.
    pub fn eval_checkpoint(&self) -> PathBuf {
        self.config
            .evaluation
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.checkpoint_path(self.config.network.kind, self.config.training.seeds[0]))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
        Ok(path)
    }
}

pub(crate) fn kind_name(kind: NetworkKind) -> &'static str {
    match kind {
        NetworkKind::Mlp => "mlp",
        NetworkKind::Gru => "gru",
    }
}

pub(crate) fn require(path: &Path, what: &str, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} not found; {hint}", path.display())))
    }
}
