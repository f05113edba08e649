use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pearson, require, ExperimentConfig, Pearson, Run, Summary};
use crate::dataset::{Dataset, DatasetRecord, DatasetSpec};
use crate::error::Result;
use crate::fitting::{derive_seed, rotate_state_z, rotate_with_yaw_shift};
use crate::integrate::simulate;
use crate::neural::{BranchNet, Checkpoint};
use crate::operator::{ErrorBudget, NeuralBsplineOperator};

pub const EVAL_SCHEMA: &str = "splineop.eval";
pub const ROTATION_SCHEMA: &str = "splineop.rot_eval";

/// Fresh test initial conditions with simulated trajectories and LS grids.
///
/// They come from the `test` namespace of the sampling seed, so they never
/// coincide with the training stream. Returns the records and the number of
/// simulations that faulted.
pub fn test_records(config: &ExperimentConfig, count: usize) -> Result<(Vec<DatasetRecord>, usize)> {
    let spec = DatasetSpec {
        sampling: config.sampling.bounds,
        count,
        angles: vec![],
        basis: config.basis_descriptor(),
        seed: derive_seed(config.sampling.seed, "test"),
    };
    let d = Dataset::build(&spec, &config.dynamics, true)?;
    Ok((d.records, d.skipped.len()))
}

/// Root mean square over every sample and state dimension.
fn rmse(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// Per-record RMSE of the operator against the simulated trajectories.
fn record_rmse(op: &NeuralBsplineOperator, records: &[DatasetRecord]) -> Result<Vec<f64>> {
    let x0s: Vec<Vec<f64>> = records.iter().map(|r| r.x0.0.to_vec()).collect();
    let grids = op.predict_many(&x0s)?;
    records
        .par_iter()
        .zip(&grids)
        .map(|(r, cp)| {
            let traj = r.trajectory.as_ref().expect("test records keep trajectories");
            Ok(rmse(&traj.states, &op.basis().spline_eval_many(cp, &traj.times)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub radius: f64,
    pub rmse: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub schema_version: u32,
    pub checkpoint: PathBuf,
    pub model: String,
    pub param_count: usize,
    pub test_seed: u64,
    pub skipped: usize,
    pub rmse: Summary,
    pub residual: Summary,
    /// Correlation between initial condition radius and RMSE.
    pub correlation: Pearson,
    pub budget: ErrorBudget,
    #[serde(skip)]
    pub records: Vec<EvalRecord>,
}

/// Error-versus-radius evaluation of the configured checkpoint on fresh test data.
pub fn eval(run: &Run) -> Result<EvalReport> {
    let c = &run.config;
    let ck_path = run.eval_checkpoint();
    require(&ck_path, "checkpoint", "run train first or set evaluation.checkpoint")?;
    let op = NeuralBsplineOperator::from_checkpoint(&Checkpoint::load(&ck_path)?)?;
    let (records, skipped) = test_records(c, c.evaluation.test_count)?;
    let errors = record_rmse(&op, &records)?;
    let rows: Vec<EvalRecord> = records
        .iter()
        .zip(&errors)
        .map(|(r, &e)| EvalRecord {
            radius: r.radius,
            rmse: e,
            residual: r.residual,
        })
        .collect();

    let (a, b) = op.basis().domain();
    let n = c.evaluation.grid_points;
    let grid: Vec<f64> = (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect();
    let budget_set = &records[..c.evaluation.budget_count.clamp(1, records.len())];
    let budget = op.error_budget(budget_set, &grid)?;

    let radii: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let report = EvalReport {
        schema: EVAL_SCHEMA.into(),
        schema_version: 1,
        checkpoint: ck_path,
        model: op.model().kind().into(),
        param_count: op.model().param_count(),
        test_seed: derive_seed(c.sampling.seed, "test"),
        skipped,
        rmse: Summary::of(&errors),
        residual: Summary::of(&records.iter().map(|r| r.residual).collect::<Vec<_>>()),
        correlation: pearson(&radii, &errors),
        budget,
        records: rows,
    };
    let mut w = csv::Writer::from_path(run.out.join("eval_records.csv"))?;
    for r in &report.records {
        w.serialize(r)?;
    }
    w.flush()?;
    run.write_json("eval_report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRecord {
    pub angle: f64,
    pub radius: f64,
    pub rmsd: f64,
    /// The same deviation for the simulated closed loop; NaN if a simulation faulted.
    pub truth_rmsd: f64,
    /// Control angles are reported apart from the sweep.
    pub control: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub schema: String,
    pub schema_version: u32,
    pub checkpoint: PathBuf,
    pub initial_conditions: usize,
    pub angles: usize,
    pub sweep: Summary,
    /// Deviation of the simulated closed loop over the sweep angles.
    pub truth_sweep: Summary,
    /// Largest deviation over the control angles.
    pub control_max: f64,
    /// RMSE of the model on the same initial conditions, for scale.
    pub model_rmse: Summary,
    /// `sweep.median / model_rmse.median`.
    pub median_ratio: f64,
    pub correlation: Pearson,
    #[serde(skip)]
    pub records: Vec<RotationRecord>,
}

/// Deviation `Rᵀ P(R x0) − P(x0)` for one initial condition and many angles.
pub fn rotation_deviation(
    op: &NeuralBsplineOperator,
    x0: &crate::dynamics::State12,
    angles: &[f64],
    times: &[f64],
) -> Result<Vec<f64>> {
    let base = op.predict_trajectory(&x0.0, times)?;
    let rotated: Vec<crate::dynamics::State12> = angles.iter().map(|&t| rotate_state_z(x0, t)).collect();
    let grids = op.predict_many(&rotated.iter().map(|x| x.0.to_vec()).collect::<Vec<_>>())?;
    angles
        .iter()
        .zip(&rotated)
        .zip(&grids)
        .map(|((&theta, xr), cp)| {
            // Undo exactly the yaw shift applied to the initial condition.
            let shift = xr.yaw() - x0.yaw();
            let pred = op.basis().spline_eval_many(cp, times)?;
            let mut back = pred.clone();
            for j in 0..pred.nrows() {
                let row: Vec<f64> = pred.row(j).iter().copied().collect();
                let un = rotate_with_yaw_shift(&row, -theta, -shift);
                for (k, v) in un.into_iter().enumerate() {
                    back[(j, k)] = v;
                }
            }
            Ok(rmse(&back, &base))
        })
        .collect()
}

/// Deviation `Rᵀ x(t; R x0) − x(t; x0)` of the simulated closed loop.
pub fn truth_deviation(
    system: &crate::dynamics::ClosedLoop,
    x0: &crate::dynamics::State12,
    angles: &[f64],
    horizon: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let base = simulate(system, x0, horizon, step)?;
    Ok(angles
        .iter()
        .map(|&theta| {
            let xr = rotate_state_z(x0, theta);
            let shift = xr.yaw() - x0.yaw();
            match simulate(system, &xr, horizon, step) {
                Ok(traj) => rmse(&traj.map_states(|x| rotate_with_yaw_shift(x, -theta, -shift)).states, &base.states),
                Err(_) => f64::NAN,
            }
        })
        .collect())
}

/// Rotation sweep of the configured checkpoint.
pub fn rot_eval(run: &Run) -> Result<RotationReport> {
    let c = &run.config;
    let sweep = &c.evaluation.rotation;
    let ck_path = run.eval_checkpoint();
    require(&ck_path, "checkpoint", "run train first or set evaluation.checkpoint")?;
    let op = NeuralBsplineOperator::from_checkpoint(&Checkpoint::load(&ck_path)?)?;
    let (records, _) = test_records(c, sweep.test_count.max(1))?;
    let times = crate::integrate::sample_times(c.dynamics.horizon, c.dynamics.step)?;

    let sweep_angles = sweep.angles();
    let mut angles = sweep_angles.clone();
    angles.extend(&sweep.controls);
    let system = c.dynamics.build()?;
    let per_ic: Vec<Result<Vec<RotationRecord>>> = records
        .par_iter()
        .map(|r| {
            let dev = rotation_deviation(&op, &r.x0, &angles, &times)?;
            let truth = truth_deviation(&system, &r.x0, &angles, c.dynamics.horizon, c.dynamics.step)?;
            Ok(angles
                .iter()
                .zip(dev.into_iter().zip(truth))
                .enumerate()
                .map(|(k, (&angle, (rmsd, truth_rmsd)))| RotationRecord {
                    angle,
                    radius: r.radius,
                    rmsd,
                    truth_rmsd,
                    control: k >= sweep_angles.len(),
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_ic {
        rows.extend(r?);
    }
    let swept: Vec<&RotationRecord> = rows.iter().filter(|r| !r.control).collect();
    let sweep_values: Vec<f64> = swept.iter().map(|r| r.rmsd).collect();
    let model_rmse = Summary::of(&record_rmse(&op, &records)?);
    let sweep_summary = Summary::of(&sweep_values);
    let report = RotationReport {
        schema: ROTATION_SCHEMA.into(),
        schema_version: 1,
        checkpoint: ck_path,
        initial_conditions: records.len(),
        angles: sweep_angles.len(),
        control_max: rows.iter().filter(|r| r.control).map(|r| r.rmsd).fold(0.0, f64::max),
        median_ratio: sweep_summary.median / model_rmse.median,
        sweep: sweep_summary,
        truth_sweep: Summary::of(
            &swept.iter().map(|r| r.truth_rmsd).filter(|v| v.is_finite()).collect::<Vec<_>>(),
        ),
        model_rmse,
        correlation: pearson(&swept.iter().map(|r| r.radius).collect::<Vec<_>>(), &sweep_values),
        records: rows,
    };
    let mut w = csv::Writer::from_path(run.out.join("rot_eval.csv"))?;
    for r in &report.records {
        w.serialize(r)?;
    }
    w.flush()?;
    run.write_json("rot_eval.json", &report)?;
    Ok(report)
}
