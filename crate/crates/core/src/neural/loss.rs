use nalgebra::{DMatrix, DMatrixView};

use crate::bspline::ControlPointGrid;
use crate::error::{Error, Result};

/// Mean squared error between the sampled splines `design · pred_i` and
/// `design · target_i`, averaged over samples and dimensions.
pub fn trajectory_loss(pred: &ControlPointGrid, target: &ControlPointGrid, design: &DMatrix<f64>) -> Result<f64> {
    if pred.dims() != target.dims() || pred.len() != target.len() || design.ncols() != pred.len() {
        return Err(Error::Shape {
            expected: format!("{} x {} grids and an N x {} design", target.dims(), target.len(), target.len()),
            found: format!("{} x {} and N x {}", pred.dims(), pred.len(), design.ncols()),
        });
    }
    let diff = pred.values() - target.values();
    let sampled = design * diff.transpose();
    Ok(sampled.norm_squared() / (sampled.nrows() * sampled.ncols()) as f64)
}

/// Batched trajectory loss over flat control-point outputs.
///
/// For a design matrix `C` (`N × ℓ`), `‖C e‖² = eᵀ(CᵀC)e`, so only the
/// `ℓ × ℓ` Gram matrix is kept.
#[derive(Debug, Clone)]
pub struct TrajectoryLoss {
    gram: DMatrix<f64>,
    samples: usize,
    dims: usize,
}

impl TrajectoryLoss {
    pub fn new(design: &DMatrix<f64>, dims: usize) -> Self {
        Self {
            gram: design.tr_mul(design),
            samples: design.nrows(),
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.is_empty()
    }

    /// Loss and gradient for `n·ℓ × B` predictions against targets of the same shape.
    pub fn eval(&self, pred: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let len = self.len();
        let batch = pred.ncols();
        let diff = pred - target;
        // Each column stacks `dims` blocks of `len` coefficients: view as len × (dims·B).
        let blocks = DMatrixView::from_slice(diff.as_slice(), len, self.dims * batch);
        let weighted = &self.gram * blocks;
        let denom = (self.samples * self.dims * batch) as f64;
        let value = blocks.dot(&weighted) / denom;
        let grad = DMatrix::from_column_slice(pred.nrows(), batch, weighted.as_slice()) * (2.0 / denom);
        (value, grad)
    }
}
