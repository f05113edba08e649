//! Fixed-step classical Runge–Kutta integration and sampled trajectories.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoop, State12, STATE_DIM, STATE_NAMES};
use crate::error::{Error, Result};

/// One classical RK4 step of `ẋ = f(x)`.
pub fn rk4_step<F>(f: &mut F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let axpy = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, k)| b + s * k).collect()
    };
    let k1 = f(x)?;
    let k2 = f(&axpy(x, &k1, 0.5 * h))?;
    let k3 = f(&axpy(x, &k2, 0.5 * h))?;
    let k4 = f(&axpy(x, &k3, h))?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Number of steps covering `[0, horizon]` with step `h`.
pub fn step_count(horizon: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(horizon > 0.0) {
        return Err(Error::Parameter(format!("need h > 0 and T > 0, got h={h}, T={horizon}")));
    }
    let steps = (horizon / h).round();
    if (steps * h - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Parameter(format!("T = {horizon} is not a multiple of h = {h}")));
    }
    Ok(steps as usize)
}

/// Uniform sample times `0, h, …, T` with the last time pinned to `T`.
pub fn sample_times(horizon: f64, h: f64) -> Result<Vec<f64>> {
    let steps = step_count(horizon, h)?;
    let mut times: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
    times[steps] = horizon;
    Ok(times)
}

/// Integrates `ẋ = f(x)` from `x0` over `[0, T]`, returning one row per sample.
pub fn integrate<F>(mut f: F, x0: &[f64], horizon: f64, h: f64) -> Result<(Vec<f64>, DMatrix<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let times = sample_times(horizon, h)?;
    let n = x0.len();
    let mut states = DMatrix::zeros(times.len(), n);
    let mut x = x0.to_vec();
    for (i, v) in x.iter().enumerate() {
        states[(0, i)] = *v;
    }
    for step in 1..times.len() {
        x = rk4_step(&mut f, &x, h).map_err(|e| Error::SimulationFault {
            step,
            reason: e.to_string(),
        })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationFault {
                step,
                reason: "state is no longer finite".into(),
            });
        }
        for (i, v) in x.iter().enumerate() {
            states[(step, i)] = *v;
        }
    }
    Ok((times, states))
}

/// Uniformly sampled solution of the closed-loop system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `N × n`, row `j` the state at `times[j]`.
    pub states: DMatrix<f64>,
    pub h: f64,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: DMatrix<f64>, h: f64) -> Result<Self> {
        if times.len() != states.nrows() || times.is_empty() {
            return Err(Error::Shape {
                expected: format!("{} state rows", times.len()),
                found: states.nrows().to_string(),
            });
        }
        Ok(Self { times, states, h })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.states.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn state(&self, j: usize) -> Vec<f64> {
        self.states.row(j).iter().copied().collect()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.state(0)
    }

    pub fn final_state(&self) -> Vec<f64> {
        self.state(self.len() - 1)
    }

    /// Applies `f` to every sampled state.
    pub fn map_states(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut states = self.states.clone();
        for j in 0..self.len() {
            let mapped = f(&self.state(j));
            for (i, v) in mapped.into_iter().enumerate() {
                states[(j, i)] = v;
            }
        }
        Self {
            times: self.times.clone(),
            states,
            h: self.h,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        if self.dims() == STATE_DIM {
            header.extend(STATE_NAMES.iter().map(|s| s.to_string()));
        } else {
            header.extend((0..self.dims()).map(|i| format!("x_{i}")));
        }
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut row = vec![self.times[j].to_string()];
            row.extend(self.states.row(j).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let values = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parameter(format!("bad trajectory value {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            times.push(values[0]);
            rows.push(values[1..].to_vec());
        }
        let dims = rows.first().map_or(0, Vec::len);
        let states = DMatrix::from_fn(rows.len(), dims, |j, i| rows[j][i]);
        let h = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Self::new(times, states, h)
    }
}

/// Closed-loop trajectory from `x0` over `[0, T]` with step `h`.
pub fn simulate(system: &ClosedLoop, x0: &State12, horizon: f64, h: f64) -> Result<Trajectory> {
    let f = |x: &[f64]| -> Result<Vec<f64>> {
        let s = State12::from_slice(x)?;
        Ok(system.deriv(&s)?.to_vec())
    };
    let (times, states) = integrate(f, x0.as_slice(), horizon, h)?;
    Trajectory::new(times, states, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_field_is_constant() {
        let (times, states) = integrate(|x| Ok(vec![0.0; x.len()]), &[1.0, -2.0], 1.0, 0.1).unwrap();
        assert_eq!(times.len(), 11);
        for j in 0..11 {
            assert_eq!(states[(j, 0)], 1.0);
            assert_eq!(states[(j, 1)], -2.0);
        }
    }

    #[test]
    fn exponential_decay_endpoint() {
        let (times, states) = integrate(|x| Ok(vec![-x[0]]), &[1.0], 1.0, 0.01).unwrap();
        assert_eq!(times[100], 1.0);
        assert!((states[(100, 0)] - (-1f64).exp()).abs() <= 1e-9);
    }

    #[test]
    fn fourth_order_on_scalar_decay() {
        let endpoint = |h: f64| integrate(|x| Ok(vec![-x[0]]), &[1.0], 1.0, h).unwrap().1[(0, 0)];
        let err = |h: f64| {
            let (_, s) = integrate(|x| Ok(vec![-x[0]]), &[1.0], 1.0, h).unwrap();
            (s[(s.nrows() - 1, 0)] - (-1f64).exp()).abs()
        };
        assert_eq!(endpoint(0.01), 1.0);
        let ratio = err(0.01) / err(0.005);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_incommensurate_horizon() {
        assert!(step_count(1.0, 0.3).is_err());
        assert!(step_count(1.0, 0.0).is_err());
        assert_eq!(step_count(2.5, 0.01).unwrap(), 250);
    }

    #[test]
    fn blow_up_names_step() {
        let err = integrate(|x| Ok(vec![x[0] * x[0] * 1e3]), &[1.0], 1.0, 0.1).unwrap_err();
        match err {
            Error::SimulationFault { step, .. } => assert!(step >= 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let (times, states) = integrate(|x| Ok(vec![-x[0], x[0]]), &[1.0, 0.3], 0.5, 0.1).unwrap();
        let traj = Trajectory::new(times, states, 0.1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.times, traj.times);
        assert_eq!(back.states, traj.states);
        assert_abs_diff_eq!(back.h, 0.1, epsilon = 1e-15);
    }
}
