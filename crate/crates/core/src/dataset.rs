//! Supervised datasets of initial conditions and least-squares control points.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::{BasisDescriptor, ControlPointGrid};
use crate::dynamics::{ClosedLoop, DynamicsConfig, State12};
use crate::error::{Error, Result};
use crate::fitting::{
    fit_residual, rotate_state_z, rotate_trajectory_z, sample_initial_conditions, LeastSquaresFitter, SamplingBox,
};
use crate::integrate::{sample_times, simulate, Trajectory};
use crate::neural::{check_schema, TrainingSet};

pub const DATASET_SCHEMA: &str = "splineop.dataset";
pub const DATASET_VERSION: u32 = 1;

/// Rotation angles (rad) used for augmentation in the reference experiments.
pub const AUGMENTATION_ANGLES: [f64; 7] = [
    std::f64::consts::PI,
    -std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_4,
    -std::f64::consts::FRAC_PI_6,
    std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_3,
    std::f64::consts::FRAC_PI_2,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// Index of the sampled initial condition this record derives from.
    pub source: usize,
    pub x0: State12,
    /// Yaw rotation applied to the sampled initial condition, if any.
    pub angle: Option<f64>,
    pub radius: f64,
    /// Max Euclidean LS reconstruction error over the samples.
    pub residual: f64,
    pub control_points: ControlPointGrid,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub source: usize,
    pub angle: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPath {
    /// Every rotated initial condition is simulated from scratch.
    Resimulate,
    /// The unrotated trajectory is rotated; only valid for yaw-equivariant dynamics.
    RotateTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub count: usize,
    pub angles: Vec<f64>,
    pub sampling: SamplingBox,
    pub step: f64,
    pub horizon: f64,
    pub dynamics_hash: String,
    pub rotation_path: RotationPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: String,
    pub schema_version: u32,
    pub basis: BasisDescriptor,
    pub provenance: Provenance,
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<SkippedRecord>,
}

/// What to sample and how to label it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub sampling: SamplingBox,
    pub count: usize,
    pub angles: Vec<f64>,
    pub basis: BasisDescriptor,
    pub seed: u64,
}

/// Simulates from `x0` and fits control points; returns the trajectory, grid and residual.
pub fn label(
    system: &ClosedLoop,
    fitter: &LeastSquaresFitter,
    x0: &State12,
    horizon: f64,
    step: f64,
) -> Result<(Trajectory, ControlPointGrid, f64)> {
    let traj = simulate(system, x0, horizon, step)?;
    let cp = fitter.fit(&traj)?;
    let residual = fit_residual(&traj, fitter.basis(), &cp)?;
    Ok((traj, cp, residual))
}

/// Compares re-simulating rotated initial conditions with rotating the
/// unrotated trajectory on a few samples.
pub fn yaw_equivariant(
    system: &ClosedLoop,
    bounds: &SamplingBox,
    angles: &[f64],
    horizon: f64,
    step: f64,
    seed: u64,
) -> bool {
    const PROBES: usize = 5;
    const TOLERANCE: f64 = 1e-6;
    let probes = sample_initial_conditions(bounds, PROBES, crate::fitting::derive_seed(seed, "equivariance"));
    probes.iter().all(|x0| {
        let Ok(base) = simulate(system, x0, horizon, step) else {
            return false;
        };
        angles.iter().all(|&theta| match simulate(system, &rotate_state_z(x0, theta), horizon, step) {
            Ok(direct) => {
                let rotated = rotate_trajectory_z(&base, theta);
                (direct.states - rotated.states).abs().max() <= TOLERANCE
            }
            Err(_) => false,
        })
    })
}

impl Dataset {
    /// Samples `count` initial conditions, augments each with the requested
    /// rotations, simulates, and fits control points. Records whose simulation
    /// faults are listed in `skipped`.
    pub fn build(spec: &DatasetSpec, dynamics: &DynamicsConfig, keep_trajectories: bool) -> Result<Self> {
        spec.sampling.validate()?;
        if spec.count == 0 {
            return Err(Error::Parameter("dataset needs at least one initial condition".into()));
        }
        let system = dynamics.build()?;
        let basis = spec.basis.build()?;
        let times = sample_times(dynamics.horizon, dynamics.step)?;
        let fitter = LeastSquaresFitter::new(&basis, &times)?;
        let path = if spec.angles.is_empty()
            || !yaw_equivariant(&system, &spec.sampling, &spec.angles, dynamics.horizon, dynamics.step, spec.seed)
        {
            RotationPath::Resimulate
        } else {
            RotationPath::RotateTrajectory
        };

        let initial = sample_initial_conditions(&spec.sampling, spec.count, spec.seed);
        let per_source: Vec<Vec<std::result::Result<DatasetRecord, SkippedRecord>>> = initial
            .par_iter()
            .enumerate()
            .map(|(source, x0)| {
                let mut out = Vec::with_capacity(1 + spec.angles.len());
                let base = label(&system, &fitter, x0, dynamics.horizon, dynamics.step);
                let make = |x0: State12, angle: Option<f64>, labelled: Result<(Trajectory, ControlPointGrid, f64)>| {
                    labelled
                        .map(|(traj, cp, residual)| DatasetRecord {
                            source,
                            x0,
                            angle,
                            radius: spec.sampling.radius(&x0),
                            residual,
                            control_points: cp,
                            trajectory: keep_trajectories.then_some(traj),
                        })
                        .map_err(|e| SkippedRecord {
                            source,
                            angle,
                            reason: e.to_string(),
                        })
                };
                for &theta in &spec.angles {
                    let rotated = rotate_state_z(x0, theta);
                    let labelled = match (&path, &base) {
                        (RotationPath::RotateTrajectory, Ok((traj, _, _))) => {
                            let traj = rotate_trajectory_z(traj, theta);
                            fitter.fit(&traj).and_then(|cp| {
                                let residual = fit_residual(&traj, &basis, &cp)?;
                                Ok((traj, cp, residual))
                            })
                        }
                        _ => label(&system, &fitter, &rotated, dynamics.horizon, dynamics.step),
                    };
                    out.push(make(rotated, Some(theta), labelled));
                }
                out.insert(0, make(*x0, None, base));
                out
            })
            .collect();

        let mut records = Vec::new();
        let mut skipped = Vec::new();
        for r in per_source.into_iter().flatten() {
            match r {
                Ok(rec) => records.push(rec),
                Err(s) => skipped.push(s),
            }
        }
        Ok(Self {
            schema: DATASET_SCHEMA.into(),
            schema_version: DATASET_VERSION,
            basis: spec.basis,
            provenance: Provenance {
                seed: spec.seed,
                count: spec.count,
                angles: spec.angles.clone(),
                sampling: spec.sampling,
                step: dynamics.step,
                horizon: dynamics.horizon,
                dynamics_hash: dynamics.hash(),
                rotation_path: path,
            },
            records,
            skipped,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn training_set(&self) -> TrainingSet {
        let m = self.records.len();
        let dims = self.records.first().map_or(0, |r| r.control_points.dims());
        let width = self.records.first().map_or(0, |r| r.control_points.flatten().len());
        let inputs = DMatrix::from_fn(dims, m, |i, j| self.records[j].x0.0[i]);
        let mut targets = DMatrix::zeros(width, m);
        for (j, r) in self.records.iter().enumerate() {
            targets.column_mut(j).copy_from_slice(&r.control_points.flatten());
        }
        TrainingSet { inputs, targets }
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_schema(&value, DATASET_SCHEMA, DATASET_VERSION)?;
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(count: usize, angles: Vec<f64>) -> DatasetSpec {
        DatasetSpec {
            sampling: SamplingBox::default().scaled(0.2),
            count,
            angles,
            basis: BasisDescriptor {
                num_basis: 20,
                degree: 3,
                start: 0.0,
                end: 1.0,
            },
            seed: 42,
        }
    }

    fn short_dynamics() -> DynamicsConfig {
        DynamicsConfig {
            horizon: 1.0,
            ..DynamicsConfig::default()
        }
    }

    #[test]
    fn record_counts() {
        let d = Dataset::build(&small_spec(2, vec![]), &short_dynamics(), false).unwrap();
        assert_eq!(d.len(), 2);
        let d = Dataset::build(&small_spec(3, vec![0.5, -1.0]), &short_dynamics(), false).unwrap();
        assert_eq!(d.len() + d.skipped.len(), 9);
        assert_eq!(d.records[1].angle, Some(0.5));
        assert_eq!(d.records[1].source, 0);
    }

    #[test]
    fn deterministic_and_serializable() {
        let spec = small_spec(4, vec![1.0]);
        let a = Dataset::build(&spec, &short_dynamics(), false).unwrap();
        let b = Dataset::build(&spec, &short_dynamics(), false).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = Dataset::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn spline_starts_at_initial_condition() {
        let d = Dataset::build(&small_spec(3, vec![2.0]), &short_dynamics(), true).unwrap();
        let basis = d.basis.build().unwrap();
        for r in &d.records {
            let s0 = basis.spline_eval(&r.control_points, 0.0).unwrap();
            let err = s0.iter().zip(r.x0.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= r.residual + 1e-12);
            let traj = r.trajectory.as_ref().unwrap();
            assert_eq!(fit_residual(traj, &basis, &r.control_points).unwrap(), r.residual);
        }
    }

    #[test]
    fn training_set_layout() {
        let d = Dataset::build(&small_spec(2, vec![]), &short_dynamics(), false).unwrap();
        let set = d.training_set();
        assert_eq!(set.inputs.shape(), (12, 2));
        assert_eq!(set.targets.shape(), (240, 2));
        assert_eq!(set.targets[(20 * 3 + 5, 1)], d.records[1].control_points.get(3, 5));
    }
}
