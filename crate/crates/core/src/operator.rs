//! Branch network composed with a fixed B-spline basis.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::{hull_envelope, BSplineBasis, ControlPointGrid, HullEnvelope};
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::neural::{BranchModel, BranchNet, Checkpoint};

/// Batch size used when predicting many initial conditions at once.
const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct NeuralBsplineOperator {
    model: BranchModel,
    basis: BSplineBasis,
    n: usize,
}

impl NeuralBsplineOperator {
    pub fn new(model: BranchModel, basis: BSplineBasis) -> Result<Self> {
        let (n, len) = model.output_shape();
        if len != basis.len() {
            return Err(Error::Shape {
                expected: format!("model emitting {} control points per dimension", basis.len()),
                found: len.to_string(),
            });
        }
        if model.input_dim() != n {
            return Err(Error::Shape {
                expected: format!("model input of width {n}"),
                found: model.input_dim().to_string(),
            });
        }
        Ok(Self { model, basis, n })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Self::new(ck.model()?, ck.basis.build()?)
    }

    pub fn model(&self) -> &BranchModel {
        &self.model
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn dims(&self) -> usize {
        self.n
    }

    pub fn predict_control_points(&self, x0: &[f64]) -> Result<ControlPointGrid> {
        if x0.len() != self.n {
            return Err(Error::Shape {
                expected: format!("{}-vector", self.n),
                found: x0.len().to_string(),
            });
        }
        ControlPointGrid::from_flat(self.n, self.basis.len(), &self.model.forward(x0)?)
    }

    /// Predicted grids for many initial conditions, in input order.
    pub fn predict_many(&self, x0s: &[Vec<f64>]) -> Result<Vec<ControlPointGrid>> {
        let chunks: Vec<Result<Vec<ControlPointGrid>>> = x0s
            .par_chunks(CHUNK)
            .map(|chunk| {
                if let Some(bad) = chunk.iter().find(|x| x.len() != self.n) {
                    return Err(Error::Shape {
                        expected: format!("{}-vector", self.n),
                        found: bad.len().to_string(),
                    });
                }
                let inputs = DMatrix::from_fn(self.n, chunk.len(), |i, j| chunk[j][i]);
                let out = self.model.forward_batch(&inputs)?;
                out.column_iter()
                    .map(|c| ControlPointGrid::from_flat(self.n, self.basis.len(), c.as_slice()))
                    .collect()
            })
            .collect();
        let mut grids = Vec::with_capacity(x0s.len());
        for c in chunks {
            grids.extend(c?);
        }
        Ok(grids)
    }

    /// `times.len() × n` predicted states.
    pub fn predict_trajectory(&self, x0: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
        let cp = self.predict_control_points(x0)?;
        self.basis.spline_eval_many(&cp, times)
    }

    /// Interval envelope guaranteed to contain the predicted spline on the whole horizon.
    pub fn safety_envelope(&self, x0: &[f64]) -> Result<HullEnvelope> {
        Ok(hull_envelope(&self.predict_control_points(x0)?))
    }

    /// Decomposes the prediction error on `records` into fitting error and
    /// control point error. Every record must carry its trajectory.
    pub fn error_budget(&self, records: &[DatasetRecord], t_grid: &[f64]) -> Result<ErrorBudget> {
        if records.is_empty() || t_grid.is_empty() {
            return Err(Error::Parameter("error budget needs records and a time grid".into()));
        }
        let x0s: Vec<Vec<f64>> = records.iter().map(|r| r.x0.0.to_vec()).collect();
        let predicted = self.predict_many(&x0s)?;

        let eps_hat = records.iter().map(|r| r.residual).fold(0.0, f64::max);
        let gamma_hat = records
            .iter()
            .zip(&predicted)
            .map(|(r, p)| r.control_points.distance(p))
            .fold(0.0, f64::max);
        let basis_norm_max = t_grid
            .iter()
            .map(|&t| self.basis.basis_norm(t))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);

        let per_record: Vec<Result<(f64, f64)>> = records
            .par_iter()
            .zip(&predicted)
            .map(|(r, cp)| {
                let traj = r.trajectory.as_ref().ok_or_else(|| {
                    Error::Parameter(format!("record from source {} has no trajectory", r.source))
                })?;
                let pred = self.basis.spline_eval_many(cp, &traj.times)?;
                let mut measured: f64 = 0.0;
                let mut excess = f64::NEG_INFINITY;
                for (j, &t) in traj.times.iter().enumerate() {
                    let err = (traj.states.row(j) - pred.row(j)).norm();
                    measured = measured.max(err);
                    excess = excess.max(err - (eps_hat + self.basis.basis_norm(t)? * gamma_hat));
                }
                Ok((measured, excess))
            })
            .collect();
        let mut measured_max: f64 = 0.0;
        let mut worst_excess = f64::NEG_INFINITY;
        for r in per_record {
            let (m, e) = r?;
            measured_max = measured_max.max(m);
            worst_excess = worst_excess.max(e);
        }
        Ok(ErrorBudget {
            eps_hat,
            gamma_hat,
            m: basis_norm_max,
            bound: eps_hat + basis_norm_max * gamma_hat,
            measured_max,
            worst_excess,
            holds: worst_excess <= BUDGET_SLACK,
        })
    }
}

/// Slack allowed on the per-point budget comparison.
pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// Max least-squares residual over the records.
    pub eps_hat: f64,
    /// Max Euclidean distance between LS and predicted control points.
    pub gamma_hat: f64,
    /// Max basis row norm over the time grid.
    #[serde(rename = "M")]
    pub m: f64,
    pub bound: f64,
    pub measured_max: f64,
    /// Largest per-point `error − (eps_hat + ‖B(t)‖·gamma_hat)`; non-positive when the budget holds.
    pub worst_excess: f64,
    pub holds: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::BasisDescriptor;
    use crate::dataset::{Dataset, DatasetSpec};
    use crate::dynamics::DynamicsConfig;
    use crate::fitting::SamplingBox;
    use crate::neural::{Activation, MlpModel};

    fn operator(seed: u64, len: usize) -> NeuralBsplineOperator {
        let model = MlpModel::init(&[12, 16, 12 * len], Activation::Relu, 12, seed).unwrap();
        let basis = BSplineBasis::clamped_uniform(len, 3, 0.0, 1.0).unwrap();
        NeuralBsplineOperator::new(BranchModel::Mlp(model), basis).unwrap()
    }

    #[test]
    fn rejects_mismatched_basis() {
        let model = MlpModel::zeros(&[12, 12 * 5], Activation::Relu, 12).unwrap();
        let basis = BSplineBasis::clamped_uniform(6, 3, 0.0, 1.0).unwrap();
        assert!(NeuralBsplineOperator::new(BranchModel::Mlp(model), basis).is_err());
    }

    #[test]
    fn zero_model_predicts_zero() {
        let model = MlpModel::zeros(&[12, 8, 12 * 6], Activation::Relu, 12).unwrap();
        let basis = BSplineBasis::clamped_uniform(6, 3, 0.0, 1.0).unwrap();
        let op = NeuralBsplineOperator::new(BranchModel::Mlp(model), basis).unwrap();
        let x = vec![0.3; 12];
        assert_eq!(op.predict_control_points(&x).unwrap(), ControlPointGrid::zeros(12, 6));
        assert!(op.predict_trajectory(&x, &[0.0, 0.5, 1.0]).unwrap().iter().all(|v| *v == 0.0));
        assert!(op.safety_envelope(&x).unwrap().widths().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn start_is_first_column_and_layout_matches() {
        let op = operator(3, 8);
        let x: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 - 0.5).collect();
        let cp = op.predict_control_points(&x).unwrap();
        assert_eq!(cp.flatten(), op.model().forward(&x).unwrap());
        let start = op.predict_trajectory(&x, &[0.0]).unwrap();
        for i in 0..12 {
            assert!((start[(0, i)] - cp.get(i, 0)).abs() < 1e-14);
        }
        let many = op.predict_many(&[x.clone(), vec![0.0; 12]]).unwrap();
        assert_eq!(many[0], cp);
    }

    #[test]
    fn continuous_and_inside_hull() {
        let op = operator(9, 10);
        let x: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.2 - 0.4).collect();
        let env = op.safety_envelope(&x).unwrap();
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
        let traj = op.predict_trajectory(&x, &times).unwrap();
        for j in 0..times.len() {
            let row: Vec<f64> = traj.row(j).iter().copied().collect();
            assert!(env.violation(&row) <= 1e-9);
        }
        for &t in &[0.0, 0.123, 0.5, 0.999_999] {
            let a = op.predict_trajectory(&x, &[t, t + 1e-9]).unwrap();
            assert!((a.row(0) - a.row(1)).norm() <= 1e-6);
        }
    }

    #[test]
    fn budget_holds_and_exact_model_gives_eps() {
        let dynamics = DynamicsConfig {
            horizon: 1.0,
            ..DynamicsConfig::default()
        };
        let spec = DatasetSpec {
            sampling: SamplingBox::default().scaled(0.3),
            count: 6,
            angles: vec![],
            basis: BasisDescriptor {
                num_basis: 10,
                degree: 3,
                start: 0.0,
                end: 1.0,
            },
            seed: 1,
        };
        let data = Dataset::build(&spec, &dynamics, true).unwrap();
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();

        let budget = operator(4, 10).error_budget(&data.records, &grid).unwrap();
        assert!(budget.holds, "{budget:?}");
        assert!(budget.measured_max <= budget.bound + 1e-9);
        assert!(budget.m > 0.0 && budget.m <= 1.0);

        // A network with one output bias per target reproduces a single record exactly.
        let rec = &data.records[0];
        let model = MlpModel::zeros(&[12, 120], Activation::Relu, 12).unwrap();
        let count = model.params().len();
        let mut params = vec![0.0; count];
        params[count - 120..].copy_from_slice(&rec.control_points.flatten());
        let model = model.with_params(params).unwrap();
        let op = NeuralBsplineOperator::new(BranchModel::Mlp(model), spec.basis.build().unwrap()).unwrap();
        let budget = op.error_budget(std::slice::from_ref(rec), &grid).unwrap();
        assert_eq!(budget.gamma_hat, 0.0);
        assert_eq!(budget.bound, rec.residual);
        assert!(budget.holds);
    }
}
