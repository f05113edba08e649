use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bspline::BasisDescriptor;
use crate::dataset::{DatasetSpec, AUGMENTATION_ANGLES};
use crate::dynamics::{DynamicsConfig, STATE_DIM};
use crate::error::{Error, Result};
use crate::fitting::SamplingBox;
use crate::neural::{Activation, BranchModel, GruModel, MlpModel, TrainConfig};

/// One experiment: what to simulate, how to fit, what to train and how to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dynamics: DynamicsConfig,
    pub basis: BasisConfig,
    pub sampling: SamplingConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dynamics: DynamicsConfig::default(),
            basis: BasisConfig::default(),
            sampling: SamplingConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            evaluation: EvaluationConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub num_basis: usize,
    pub degree: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            num_basis: 50,
            degree: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub count: usize,
    pub seed: u64,
    #[serde(rename = "box")]
    pub bounds: SamplingBox,
    /// Yaw rotations (rad) added for every sampled initial condition.
    pub angles: Vec<f64>,
    /// Also write one trajectory CSV and one control point CSV per record.
    pub write_csv: bool,
    /// Dataset file; defaults to `dataset.json` in the output directory.
    pub dataset: Option<PathBuf>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            count: 5000,
            seed: 0,
            bounds: SamplingBox::default(),
            angles: AUGMENTATION_ANGLES.to_vec(),
            write_csv: false,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    #[default]
    Mlp,
    Gru,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub kind: NetworkKind,
    pub activation: Activation,
    /// MLP hidden widths; input and output widths follow from the state and basis.
    pub hidden: Vec<usize>,
    pub gru_hidden: usize,
    /// Hidden widths of the dense head applied to each GRU step.
    pub head_hidden: Vec<usize>,
    /// Divide inputs and multiply outputs by the sampling box half-widths.
    pub scale_states: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            kind: NetworkKind::Mlp,
            activation: Activation::Relu,
            hidden: vec![120; 11],
            gru_hidden: 120,
            head_hidden: vec![120, 120],
            scale_states: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// One model is trained per seed.
    pub seeds: Vec<u64>,
    /// Continue from existing checkpoints in the output directory.
    pub resume: bool,
    #[serde(flatten)]
    pub optimizer: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            resume: false,
            optimizer: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub test_count: usize,
    /// Leading test records used for the error budget.
    pub budget_count: usize,
    /// Points of the dense grid on which the basis norm is maximized.
    pub grid_points: usize,
    /// Checkpoint to evaluate; defaults to the first training seed's checkpoint.
    pub checkpoint: Option<PathBuf>,
    pub rotation: RotationSweep,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            test_count: 1000,
            budget_count: 100,
            grid_points: 2001,
            checkpoint: None,
            rotation: RotationSweep::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSweep {
    /// Number of evenly spaced angles on `[start, end]`.
    pub count: usize,
    pub start: f64,
    pub end: f64,
    /// Extra angles reported separately, e.g. a full turn.
    pub controls: Vec<f64>,
    /// Leading test initial conditions used in the sweep.
    pub test_count: usize,
}

impl Default for RotationSweep {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            count: 85,
            start: PI / 8.0,
            end: 15.0 * PI / 8.0,
            controls: vec![2.0 * PI],
            test_count: 100,
        }
    }
}

impl RotationSweep {
    pub fn angles(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n)
                .map(|k| self.start + (self.end - self.start) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub repetitions: usize,
    pub warmup: usize,
    /// Checkpoints to time; untrained weights of the configured shape are used when absent.
    pub mlp_checkpoint: Option<PathBuf>,
    pub gru_checkpoint: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repetitions: 100,
            warmup: 10,
            mlp_checkpoint: None,
            gru_checkpoint: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML or JSON, chosen by extension (`.json` is JSON, anything else TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.dynamics.step > 0.0 && self.dynamics.horizon > self.dynamics.step) {
            return bad(format!(
                "dynamics: need 0 < step < horizon, got step {} horizon {}",
                self.dynamics.step, self.dynamics.horizon
            ));
        }
        if self.basis.num_basis <= self.basis.degree {
            return bad(format!(
                "basis: {} control points cannot carry degree {}",
                self.basis.num_basis, self.basis.degree
            ));
        }
        let samples = (self.dynamics.horizon / self.dynamics.step).round() as usize + 1;
        if samples < self.basis.num_basis {
            return bad(format!(
                "basis: {samples} trajectory samples cannot determine {} control points",
                self.basis.num_basis
            ));
        }
        if self.sampling.count == 0 {
            return bad("sampling: count must be positive".into());
        }
        self.sampling
            .bounds
            .validate()
            .map_err(|e| Error::Config(format!("sampling.box: {e}")))?;
        if self.sampling.angles.iter().any(|a| !a.is_finite()) {
            return bad("sampling: angles must be finite".into());
        }
        match self.network.kind {
            NetworkKind::Mlp if self.network.hidden.contains(&0) => {
                return bad("network: hidden widths must be positive".into())
            }
            NetworkKind::Gru if self.network.gru_hidden == 0 || self.network.head_hidden.contains(&0) => {
                return bad("network: GRU widths must be positive".into())
            }
            _ => {}
        }
        if self.training.seeds.is_empty() {
            return bad("training: seeds must not be empty".into());
        }
        self.training
            .optimizer
            .validate()
            .map_err(|e| Error::Config(format!("training: {e}")))?;
        if self.evaluation.test_count == 0 || self.evaluation.grid_points < 2 {
            return bad("evaluation: test_count must be positive and grid_points at least 2".into());
        }
        if self.bench.repetitions == 0 {
            return bad("bench: repetitions must be positive".into());
        }
        Ok(())
    }

    pub fn basis_descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            num_basis: self.basis.num_basis,
            degree: self.basis.degree,
            start: 0.0,
            end: self.dynamics.horizon,
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            sampling: self.sampling.bounds,
            count: self.sampling.count,
            angles: self.sampling.angles.clone(),
            basis: self.basis_descriptor(),
            seed: self.sampling.seed,
        }
    }

    fn state_scale(&self) -> Vec<f64> {
        if self.network.scale_states {
            self.sampling.bounds.half_widths().to_vec()
        } else {
            vec![1.0; STATE_DIM]
        }
    }

    pub fn mlp_widths(&self) -> Vec<usize> {
        let mut widths = vec![STATE_DIM];
        widths.extend(&self.network.hidden);
        widths.push(STATE_DIM * self.basis.num_basis);
        widths
    }

    /// Freshly initialized model of the configured kind.
    pub fn build_model(&self, kind: NetworkKind, seed: u64) -> Result<BranchModel> {
        let scale = self.state_scale();
        Ok(match kind {
            NetworkKind::Mlp => BranchModel::Mlp(
                MlpModel::init(&self.mlp_widths(), self.network.activation, STATE_DIM, seed)?
                    .with_scaling(scale.clone(), scale)?,
            ),
            NetworkKind::Gru => BranchModel::Gru(
                GruModel::init(
                    STATE_DIM,
                    self.network.gru_hidden,
                    &self.network.head_hidden,
                    self.basis.num_basis,
                    self.network.activation,
                    seed,
                )?
                .with_scaling(scale)?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::BranchNet;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c = ExperimentConfig::from_toml("name = \"x\"\n[sampling]\ncount = 2\nangles = []\n").unwrap();
        assert_eq!(c.sampling.count, 2);
        assert_eq!(c.basis.num_basis, 50);
        assert_eq!(c.evaluation.rotation.angles().len(), 85);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::from_toml("[sampling]\ncount = 2\ncolor = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ExperimentConfig::from_json("{\"sampling\": {\"count\": -1}}").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(ExperimentConfig::from_toml("[basis]\nnum_basis = 300\n").is_err());
    }

    #[test]
    fn sweep_endpoints() {
        let a = RotationSweep::default().angles();
        assert!((a[0] - std::f64::consts::PI / 8.0).abs() < 1e-15);
        assert!((a[84] - 15.0 * std::f64::consts::PI / 8.0).abs() < 1e-15);
    }

    #[test]
    fn reference_model_sizes() {
        let c = ExperimentConfig::default();
        assert_eq!(c.build_model(NetworkKind::Mlp, 0).unwrap().param_count(), 219_360);
        assert_eq!(c.build_model(NetworkKind::Gru, 0).unwrap().param_count(), 78_732);
    }
}
