//! Lyapunov and Riccati solvers for LQR synthesis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of a CARE solve: `K = R⁻¹ Bᵀ P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrGain {
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Relative Frobenius residual of each Newton iterate.
    pub residual_history: Vec<f64>,
}

pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    max_real_eigenvalue(a) < 0.0
}

fn check_square(name: &str, m: &DMatrix<f64>, size: usize) -> Result<()> {
    if m.shape() != (size, size) {
        return Err(Error::Shape {
            expected: format!("{name} of size {size} x {size}"),
            found: format!("{} x {}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Solves `AᵀP + PA + Q = 0` for Hurwitz `A` through the Kronecker-vectorized system.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    check_square("A", a, m)?;
    check_square("Q", q, m)?;
    if !is_hurwitz(a) {
        return Err(Error::Singular(format!(
            "A is not Hurwitz (max real eigenvalue {:.3e})",
            max_real_eigenvalue(a)
        )));
    }
    // vec(AᵀP) = (I ⊗ Aᵀ) vec P,  vec(PA) = (Aᵀ ⊗ I) vec P  (column-major vec)
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(m, m);
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let vec_p = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator is singular".into()))?;
    let p = DMatrix::from_column_slice(m, m, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Lyapunov solution".into()));
    }
    Ok(p)
}

/// `‖AᵀP + PA + Q‖_F / max(‖Q‖_F, 1)`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let res = a.transpose() * p + p * a + q;
    res.norm() / q.norm().max(1.0)
}

/// Relative Frobenius residual of the CARE `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("R is not invertible".into()))?;
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    let scale = (a.transpose() * p).norm().max(q.norm()).max(1.0);
    Ok(res.norm() / scale)
}

/// Stabilizing gain by Bass's shifted-Lyapunov construction.
///
/// With `β > max |Re λ(A)|`, `−(A + βI)` is Hurwitz; solving
/// `(A + βI)Z + Z(A + βI)ᵀ = 2BBᵀ` gives `K = BᵀZ⁻¹` with `A − BK` stable
/// whenever `(A, B)` is controllable.
pub fn initial_stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let spread = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.abs())
        .fold(0.0, f64::max);
    let beta = 1.0 + spread;
    let shifted = -(a + DMatrix::<f64>::identity(m, m) * beta).transpose();
    let z = lyapunov_solve(&shifted, &(b * b.transpose() * 2.0))?;
    let z_inv = z
        .try_inverse()
        .ok_or_else(|| Error::Singular("(A, B) is not controllable: Gramian is singular".into()))?;
    Ok(b.transpose() * z_inv)
}

const CARE_MAX_ITERATIONS: usize = 100;
const CARE_TARGET: f64 = 1e-12;
const CARE_ACCEPT: f64 = 1e-7;

/// Kleinman–Newton iteration for the continuous algebraic Riccati equation.
pub fn care_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: Option<&DMatrix<f64>>,
) -> Result<LqrGain> {
    let m = a.nrows();
    check_square("A", a, m)?;
    check_square("Q", q, m)?;
    check_square("R", r, b.ncols())?;
    if b.nrows() != m {
        return Err(Error::Shape {
            expected: format!("B with {m} rows"),
            found: b.nrows().to_string(),
        });
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("R is not invertible".into()))?;

    let mut k = match k0 {
        Some(k) => k.clone(),
        None => initial_stabilizing_gain(a, b)?,
    };
    let mut history = Vec::new();
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..CARE_MAX_ITERATIONS {
        let closed = a - b * &k;
        let weight = q + k.transpose() * r * &k;
        let p = lyapunov_solve(&closed, &weight)?;
        k = &r_inv * b.transpose() * &p;
        let res = care_residual(a, b, q, r, &p)?;
        history.push(res);
        let improved = best.as_ref().is_none_or(|(r0, _)| res < *r0);
        if improved {
            best = Some((res, p));
        }
        if res <= CARE_TARGET {
            break;
        }
        // Quadratic convergence has stalled at round-off.
        if !improved && res <= CARE_ACCEPT {
            break;
        }
    }
    let (res, p) = best.expect("at least one iteration");
    if res > CARE_ACCEPT {
        return Err(Error::NoConvergence {
            what: "Kleinman-Newton CARE iteration",
            iterations: history.len(),
            history,
        });
    }
    let k = &r_inv * b.transpose() * &p;
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::Singular("CARE solution does not stabilize (A, B)".into()));
    }
    Ok(LqrGain {
        k,
        q: q.clone(),
        r: r.clone(),
        p,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn lyapunov_scalar() {
        let p = lyapunov_solve(&scalar(-1.0), &scalar(2.0)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_negative_identity() {
        let q0 = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.0, 0.1, 0.0, 3.0]);
        let a = -DMatrix::<f64>::identity(3, 3);
        let p = lyapunov_solve(&a, &q0).unwrap();
        assert_abs_diff_eq!((p - &q0 * 0.5).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_random_hurwitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let raw = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let shift = max_real_eigenvalue(&raw) + 0.5;
            let a = raw - DMatrix::identity(4, 4) * shift;
            let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let q = &g * g.transpose();
            let p = lyapunov_solve(&a, &q).unwrap();
            assert!(lyapunov_residual(&a, &p, &q) <= 1e-9);
        }
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            lyapunov_solve(&scalar(1.0), &scalar(1.0)),
            Err(Error::Singular(_))
        ));
        assert!(lyapunov_solve(&scalar(0.0), &scalar(1.0)).is_err());
    }

    #[test]
    fn care_scalar_closed_forms() {
        let g = care_solve(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), None).unwrap();
        assert_abs_diff_eq!(g.p[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.k[(0, 0)], 1.0, epsilon = 1e-10);

        let g = care_solve(&scalar(1.0), &scalar(1.0), &scalar(0.0), &scalar(1.0), None).unwrap();
        assert_abs_diff_eq!(g.p[(0, 0)], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.k[(0, 0)], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn care_accepts_user_initial_gain() {
        let g = care_solve(
            &scalar(1.0),
            &scalar(1.0),
            &scalar(0.0),
            &scalar(1.0),
            Some(&scalar(10.0)),
        )
        .unwrap();
        assert_abs_diff_eq!(g.k[(0, 0)], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn care_reports_uncontrollable_pair() {
        // unstable mode that B cannot reach
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = scalar(1.0);
        assert!(care_solve(&a, &b, &q, &r, None).is_err());
    }

    #[test]
    fn care_double_integrator() {
        // ẍ = u, Q = I, R = 1: P = [[√3, 1], [1, √3]], K = [1, √3]
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let g = care_solve(&a, &b, &DMatrix::identity(2, 2), &scalar(1.0), None).unwrap();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(g.k[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.k[(0, 1)], s3, epsilon = 1e-10);
        assert_abs_diff_eq!(g.p[(0, 0)], s3, epsilon = 1e-10);
    }
}
