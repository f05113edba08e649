//! Branch networks mapping an initial condition to control points.
//!
//! Both architectures keep their parameters in one flat vector so the
//! optimizer and the gradient checks can treat them uniformly. Networks work
//! in normalized state coordinates: inputs are divided by `state_scale` and
//! emitted control points multiplied by it.

mod adam;
mod checkpoint;
mod gru;
mod loss;
mod mlp;
mod train;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub(crate) use checkpoint::check_schema;
pub use checkpoint::{Architecture, Checkpoint, CHECKPOINT_SCHEMA, CHECKPOINT_VERSION};
pub use gru::GruModel;
pub use loss::{trajectory_loss, TrajectoryLoss};
pub use mlp::MlpModel;
pub use train::{train, EpochRecord, StopReason, TrainConfig, TrainReport, TrainingSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Number of weights and biases in a chain of affine layers.
pub fn dense_param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// He-uniform draws for a dense layer of the given fan-in.
pub(crate) fn he_uniform(rng: &mut impl Rng, fan_in: usize, out: &mut [f64]) {
    let limit = (6.0 / fan_in as f64).sqrt();
    for w in out {
        *w = rng.random_range(-limit..limit);
    }
}

/// Common interface of the branch networks.
pub trait BranchNet {
    /// `(n, ℓ)`: state dimension and control points per dimension.
    fn output_shape(&self) -> (usize, usize);

    fn input_dim(&self) -> usize;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Forward pass over a batch: `inputs` is `input_dim × B`, output is
    /// `n·ℓ × B` in physical units, each column row-major by state dimension.
    fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// Loss and parameter gradient. `loss` maps the batch output to a scalar
    /// and its gradient with respect to that output.
    fn loss_and_grad(
        &self,
        inputs: &DMatrix<f64>,
        loss: &mut dyn FnMut(&DMatrix<f64>) -> (f64, DMatrix<f64>),
    ) -> Result<(f64, Vec<f64>)>;

    fn forward(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward_batch(&DMatrix::from_column_slice(x0.len(), 1, x0))?;
        Ok(out.as_slice().to_vec())
    }
}

/// Either branch architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchModel {
    Mlp(MlpModel),
    Gru(GruModel),
}

impl BranchModel {
    pub fn architecture(&self) -> Architecture {
        match self {
            BranchModel::Mlp(m) => m.architecture(),
            BranchModel::Gru(g) => g.architecture(),
        }
    }

    pub fn state_scale(&self) -> &[f64] {
        match self {
            BranchModel::Mlp(m) => m.state_scale(),
            BranchModel::Gru(g) => g.state_scale(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BranchModel::Mlp(_) => "mlp",
            BranchModel::Gru(_) => "gru",
        }
    }

    fn inner(&self) -> &dyn BranchNet {
        match self {
            BranchModel::Mlp(m) => m,
            BranchModel::Gru(g) => g,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn BranchNet {
        match self {
            BranchModel::Mlp(m) => m,
            BranchModel::Gru(g) => g,
        }
    }
}

impl BranchNet for BranchModel {
    fn output_shape(&self) -> (usize, usize) {
        self.inner().output_shape()
    }

    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn params(&self) -> &[f64] {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.inner_mut().params_mut()
    }

    fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.inner().forward_batch(inputs)
    }

    fn loss_and_grad(
        &self,
        inputs: &DMatrix<f64>,
        loss: &mut dyn FnMut(&DMatrix<f64>) -> (f64, DMatrix<f64>),
    ) -> Result<(f64, Vec<f64>)> {
        self.inner().loss_and_grad(inputs, loss)
    }
}

pub fn param_count(model: &dyn BranchNet) -> usize {
    model.param_count()
}

pub(crate) fn check_input(expected: usize, inputs: &DMatrix<f64>) -> Result<()> {
    if inputs.nrows() != expected {
        return Err(Error::Shape {
            expected: format!("{expected} input rows"),
            found: inputs.nrows().to_string(),
        });
    }
    Ok(())
}

pub(crate) fn check_scale(scale: &[f64], dims: usize) -> Result<()> {
    if scale.len() != dims || scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Parameter(format!(
            "state scale must hold {dims} positive entries, got {scale:?}"
        )));
    }
    Ok(())
}
