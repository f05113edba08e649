//! Finite-difference gradient oracle shared by the gradient tests and the acceptance suite.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splineop::neural::{BranchModel, BranchNet, TrajectoryLoss};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Trajectory loss with a random non-negative design matrix and random targets.
pub struct Problem {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub loss: TrajectoryLoss,
}

impl Problem {
    pub fn new(model: &BranchModel, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dims, len) = model.output_shape();
        let design = DMatrix::from_fn(3 * len + 2, len, |_, _| rng.random_range(0.0..1.0));
        Self {
            inputs: random_matrix(&mut rng, model.input_dim(), batch, 1.0),
            targets: random_matrix(&mut rng, dims * len, batch, 1.0),
            loss: TrajectoryLoss::new(&design, dims),
        }
    }

    pub fn value(&self, model: &BranchModel) -> f64 {
        let out = model.forward_batch(&self.inputs).unwrap();
        self.loss.eval(&out, &self.targets).0
    }

    pub fn analytic(&self, model: &BranchModel) -> (f64, Vec<f64>) {
        model
            .loss_and_grad(&self.inputs, &mut |out| self.loss.eval(out, &self.targets))
            .unwrap()
    }
}

/// Largest relative discrepancy `|a − f| / max(|a|, |f|, floor)` over all parameters.
///
/// Central differences with step 1e-5 carry about 1e-11 absolute rounding
/// noise on an O(1) loss, so entries far below the gradient scale cannot be
/// resolved to 1e-5 relative; `floor` is 1e-5 of the largest gradient entry.
pub fn worst_relative_error(model: &BranchModel, problem: &Problem) -> f64 {
    let (value, grad) = problem.analytic(model);
    assert!((value - problem.value(model)).abs() <= 1e-12 * value.abs().max(1.0));
    let floor = 1e-5 * grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..grad.len() {
        let p = model.params()[i];
        probe.params_mut()[i] = p + STEP;
        let up = problem.value(&probe);
        probe.params_mut()[i] = p - STEP;
        let down = problem.value(&probe);
        probe.params_mut()[i] = p;
        let fd = (up - down) / (2.0 * STEP);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
