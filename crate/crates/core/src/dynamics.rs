//! Closed-loop 6-DOF quadrotor.
//!
//! State layout (12 entries): position `p`, world-frame velocity `v`, ZYX
//! Euler angles `(roll, pitch, yaw)` and body angular rates `ω`. Inputs are
//! `(thrust, τx, τy, τz)` with thrust along body `z`.

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{care_solve, LqrGain};

pub const STATE_DIM: usize = 12;
pub const INPUT_DIM: usize = 4;

pub const STATE_NAMES: [&str; STATE_DIM] = [
    "p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "roll", "pitch", "yaw", "w_x", "w_y", "w_z",
];

pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ANG: usize = 6;
pub const RATE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State12(pub [f64; STATE_DIM]);

impl State12 {
    pub const ZERO: Self = Self([0.0; STATE_DIM]);

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        let arr: [f64; STATE_DIM] = x.try_into().map_err(|_| Error::Shape {
            expected: STATE_DIM.to_string(),
            found: x.len().to_string(),
        })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[POS], self.0[POS + 1], self.0[POS + 2])
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.0[VEL], self.0[VEL + 1], self.0[VEL + 2])
    }

    pub fn roll(&self) -> f64 {
        self.0[ANG]
    }

    pub fn pitch(&self) -> f64 {
        self.0[ANG + 1]
    }

    pub fn yaw(&self) -> f64 {
        self.0[ANG + 2]
    }

    pub fn rates(&self) -> Vector3<f64> {
        Vector3::new(self.0[RATE], self.0[RATE + 1], self.0[RATE + 2])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub gravity: f64,
    /// Diagonal of the body inertia tensor (kg·m²).
    pub inertia: [f64; 3],
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 9.81,
            inertia: [0.01, 0.01, 0.02],
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Parameter(format!("mass must be positive, got {}", self.mass)));
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            return Err(Error::Parameter(format!(
                "inertia entries must be positive, got {:?}",
                self.inertia
            )));
        }
        if !self.gravity.is_finite() {
            return Err(Error::Parameter("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn hover_input(&self) -> [f64; INPUT_DIM] {
        [self.mass * self.gravity, 0.0, 0.0, 0.0]
    }
}

/// Body-to-world rotation for ZYX Euler angles.
pub fn rotation_zyx(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

fn check_chart(x: &State12) -> Result<()> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    if !(x.roll().abs() < half_pi && x.pitch().abs() < half_pi) {
        return Err(Error::EulerChart {
            roll: x.roll(),
            pitch: x.pitch(),
        });
    }
    Ok(())
}

/// Open-loop rigid-body dynamics `ẋ = f(x, u)`.
pub fn quadrotor_deriv(
    params: &QuadrotorParams,
    x: &State12,
    u: &[f64; INPUT_DIM],
) -> Result<[f64; STATE_DIM]> {
    check_chart(x)?;
    let (roll, pitch, yaw) = (x.roll(), x.pitch(), x.yaw());
    let omega = x.rates();
    let thrust_dir = rotation_zyx(roll, pitch, yaw) * Vector3::z();
    let accel = thrust_dir * (u[0] / params.mass) - Vector3::new(0.0, 0.0, params.gravity);

    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let tp = sp / cp;
    let euler_rates = Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp) * omega;

    let j = Vector3::from(params.inertia);
    let torque = Vector3::new(u[1], u[2], u[3]);
    let gyro = omega.cross(&j.component_mul(&omega));
    let omega_dot = (torque - gyro).component_div(&j);

    let mut dx = [0.0; STATE_DIM];
    dx[POS..POS + 3].copy_from_slice(&x.0[VEL..VEL + 3]);
    dx[VEL..VEL + 3].copy_from_slice(accel.as_slice());
    dx[ANG..ANG + 3].copy_from_slice(euler_rates.as_slice());
    dx[RATE..RATE + 3].copy_from_slice(omega_dot.as_slice());
    Ok(dx)
}

/// Central finite-difference Jacobians `(A, B)` at an equilibrium.
pub fn linearize(
    params: &QuadrotorParams,
    x_eq: &State12,
    u_eq: &[f64; INPUT_DIM],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let f0 = quadrotor_deriv(params, x_eq, u_eq)?;
    let drift = f0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if drift > 1e-10 {
        return Err(Error::Parameter(format!(
            "linearization point is not an equilibrium (|f| = {drift:.3e})"
        )));
    }
    let step = |v: f64| 1e-6 * v.abs().max(1.0);

    let mut a = DMatrix::zeros(STATE_DIM, STATE_DIM);
    for col in 0..STATE_DIM {
        let h = step(x_eq.0[col]);
        let mut plus = *x_eq;
        let mut minus = *x_eq;
        plus.0[col] += h;
        minus.0[col] -= h;
        let fp = quadrotor_deriv(params, &plus, u_eq)?;
        let fm = quadrotor_deriv(params, &minus, u_eq)?;
        for row in 0..STATE_DIM {
            a[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    let mut b = DMatrix::zeros(STATE_DIM, INPUT_DIM);
    for col in 0..INPUT_DIM {
        let h = step(u_eq[col]);
        let mut plus = *u_eq;
        let mut minus = *u_eq;
        plus[col] += h;
        minus[col] -= h;
        let fp = quadrotor_deriv(params, x_eq, &plus)?;
        let fm = quadrotor_deriv(params, x_eq, &minus)?;
        for row in 0..STATE_DIM {
            b[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    Ok((a, b))
}

/// LQR weights; either diagonal weights for the CARE or an explicit gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerSpec {
    Lqr {
        q_diag: Vec<f64>,
        r_diag: Vec<f64>,
    },
    /// Row-major 4 × 12 gain used verbatim.
    Gain { k: Vec<Vec<f64>> },
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec::Lqr {
            q_diag: vec![1.0; STATE_DIM],
            r_diag: vec![1.0; INPUT_DIM],
        }
    }
}

/// The autonomous closed-loop system `ẋ = f(x, u_eq − K x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    params: QuadrotorParams,
    gain: SMatrix<f64, INPUT_DIM, STATE_DIM>,
    u_eq: [f64; INPUT_DIM],
    lqr: Option<LqrGain>,
}

impl ClosedLoop {
    /// LQR about hover from diagonal weights.
    pub fn lqr(params: QuadrotorParams, q_diag: &[f64], r_diag: &[f64]) -> Result<Self> {
        params.validate()?;
        if q_diag.len() != STATE_DIM || r_diag.len() != INPUT_DIM {
            return Err(Error::Shape {
                expected: format!("{STATE_DIM} Q weights and {INPUT_DIM} R weights"),
                found: format!("{} and {}", q_diag.len(), r_diag.len()),
            });
        }
        let u_eq = params.hover_input();
        let (a, b) = linearize(&params, &State12::ZERO, &u_eq)?;
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(q_diag));
        let r = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(r_diag));
        let lqr = care_solve(&a, &b, &q, &r, None)?;
        let gain = SMatrix::from_fn(|i, j| lqr.k[(i, j)]);
        Ok(Self {
            params,
            gain,
            u_eq,
            lqr: Some(lqr),
        })
    }

    pub fn with_gain(params: QuadrotorParams, k: &DMatrix<f64>) -> Result<Self> {
        params.validate()?;
        if k.shape() != (INPUT_DIM, STATE_DIM) {
            return Err(Error::Shape {
                expected: format!("{INPUT_DIM} x {STATE_DIM} gain"),
                found: format!("{} x {}", k.nrows(), k.ncols()),
            });
        }
        Ok(Self {
            params,
            gain: SMatrix::from_fn(|i, j| k[(i, j)]),
            u_eq: params.hover_input(),
            lqr: None,
        })
    }

    pub fn from_spec(params: QuadrotorParams, spec: &ControllerSpec) -> Result<Self> {
        match spec {
            ControllerSpec::Lqr { q_diag, r_diag } => Self::lqr(params, q_diag, r_diag),
            ControllerSpec::Gain { k } => {
                if k.len() != INPUT_DIM || k.iter().any(|r| r.len() != STATE_DIM) {
                    return Err(Error::Shape {
                        expected: format!("{INPUT_DIM} rows of {STATE_DIM}"),
                        found: format!("{} rows", k.len()),
                    });
                }
                let m = DMatrix::from_fn(INPUT_DIM, STATE_DIM, |i, j| k[i][j]);
                Self::with_gain(params, &m)
            }
        }
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    pub fn gain(&self) -> DMatrix<f64> {
        DMatrix::from_fn(INPUT_DIM, STATE_DIM, |i, j| self.gain[(i, j)])
    }

    /// The CARE solution when the gain came from LQR synthesis.
    pub fn lqr_solution(&self) -> Option<&LqrGain> {
        self.lqr.as_ref()
    }

    pub fn control(&self, x: &State12) -> [f64; INPUT_DIM] {
        let kx = self.gain * nalgebra::SVector::<f64, STATE_DIM>::from_column_slice(&x.0);
        std::array::from_fn(|i| self.u_eq[i] - kx[i])
    }

    pub fn deriv(&self, x: &State12) -> Result<[f64; STATE_DIM]> {
        quadrotor_deriv(&self.params, x, &self.control(x))
    }
}

/// `ẋ = f(x, u_eq − K x)` as a free function.
pub fn closed_loop_deriv(system: &ClosedLoop, x: &State12) -> Result<[f64; STATE_DIM]> {
    system.deriv(x)
}

/// Everything that determines the simulated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub params: QuadrotorParams,
    pub controller: ControllerSpec,
    /// Integration and sampling step (s).
    pub step: f64,
    /// Prediction horizon T (s).
    pub horizon: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            params: QuadrotorParams::default(),
            controller: ControllerSpec::default(),
            step: 0.01,
            horizon: 2.5,
        }
    }
}

impl DynamicsConfig {
    pub fn build(&self) -> Result<ClosedLoop> {
        ClosedLoop::from_spec(self.params, &self.controller)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
