use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{DenseStack, DenseTape};
use super::{check_input, check_scale, dense_param_count, he_uniform, Activation, Architecture, BranchNet};
use crate::error::{Error, Result};

/// Recurrent branch network emitting one control column per step.
///
/// A GRU cell (reset, update and candidate gates, each with an input-side and
/// a recurrent-side bias) feeds a dense head that maps the hidden state to a
/// control column. Step 1 receives the initial condition; every later step
/// receives the column emitted by the previous step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    dims: usize,
    hidden: usize,
    head_widths: Vec<usize>,
    steps: usize,
    activation: Activation,
    state_scale: Vec<f64>,
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct StepTape {
    input: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    n: DMatrix<f64>,
    gh_n: DMatrix<f64>,
    head: DenseTape,
}

impl GruModel {
    /// `head_hidden` lists the hidden widths of the dense head; the head maps
    /// `hidden → head_hidden… → dims`.
    pub fn zeros(
        dims: usize,
        hidden: usize,
        head_hidden: &[usize],
        steps: usize,
        activation: Activation,
    ) -> Result<Self> {
        if dims == 0 || hidden == 0 || steps == 0 || head_hidden.contains(&0) {
            return Err(Error::Parameter(format!(
                "invalid GRU shape: dims {dims}, hidden {hidden}, head {head_hidden:?}, steps {steps}"
            )));
        }
        let mut head_widths = vec![hidden];
        head_widths.extend_from_slice(head_hidden);
        head_widths.push(dims);
        let count = Self::cell_param_count(dims, hidden) + dense_param_count(&head_widths);
        Ok(Self {
            dims,
            hidden,
            head_widths,
            steps,
            activation,
            state_scale: vec![1.0; dims],
            params: vec![0.0; count],
        })
    }

    /// He-uniform weights for the head, uniform `±1/√hidden` for the cell, zero biases.
    pub fn init(
        dims: usize,
        hidden: usize,
        head_hidden: &[usize],
        steps: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        use rand::Rng;
        let mut model = Self::zeros(dims, hidden, head_hidden, steps, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let cell_weights = 3 * hidden * (dims + hidden);
        for w in &mut model.params[..cell_weights] {
            *w = rng.random_range(-bound..bound);
        }
        let mut offset = Self::cell_param_count(dims, hidden);
        for w in model.head_widths.clone().windows(2) {
            he_uniform(&mut rng, w[0], &mut model.params[offset..offset + w[0] * w[1]]);
            offset += w[0] * w[1] + w[1];
        }
        Ok(model)
    }

    /// `3(h·n_in + h² + 2h)`: three gates, each with input and recurrent weights and two biases.
    pub fn cell_param_count(input: usize, hidden: usize) -> usize {
        3 * (hidden * input + hidden * hidden + 2 * hidden)
    }

    pub fn with_scaling(mut self, state_scale: Vec<f64>) -> Result<Self> {
        check_scale(&state_scale, self.dims)?;
        self.state_scale = state_scale;
        Ok(self)
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters", self.params.len()),
                found: params.len().to_string(),
            });
        }
        self.params = params;
        Ok(self)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn head_widths(&self) -> &[usize] {
        &self.head_widths
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.state_scale
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::Gru {
            dims: self.dims,
            hidden: self.hidden,
            head_hidden: self.head_widths[1..self.head_widths.len() - 1].to_vec(),
            steps: self.steps,
            activation: self.activation,
            state_scale: self.state_scale.clone(),
        }
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize) {
        let h3 = 3 * self.hidden;
        let w_in = 0;
        let w_rec = w_in + h3 * self.dims;
        let b_in = w_rec + h3 * self.hidden;
        let b_rec = b_in + h3;
        let head = b_rec + h3;
        (w_in, w_rec, b_in, b_rec, head)
    }

    fn head(&self) -> DenseStack {
        DenseStack::new(&self.head_widths, self.activation, self.offsets().4)
    }

    fn gates(&self, input: &DMatrix<f64>, h_prev: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let h3 = 3 * self.hidden;
        let (w_in, w_rec, b_in, b_rec, _) = self.offsets();
        let p = &self.params;
        let wi = DMatrixView::from_slice(&p[w_in..w_rec], h3, self.dims);
        let wh = DMatrixView::from_slice(&p[w_rec..b_in], h3, self.hidden);
        let bi = DVectorView::from_slice(&p[b_in..b_rec], h3);
        let bh = DVectorView::from_slice(&p[b_rec..b_rec + h3], h3);
        let mut gi = wi * input;
        let mut gh = wh * h_prev;
        for mut c in gi.column_iter_mut() {
            c += &bi;
        }
        for mut c in gh.column_iter_mut() {
            c += &bh;
        }
        (gi, gh)
    }

    /// One cell update; returns `(h, r, z, n, gh_n)`.
    #[allow(clippy::type_complexity)]
    fn cell(
        &self,
        input: &DMatrix<f64>,
        h_prev: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let hd = self.hidden;
        let batch = input.ncols();
        let (gi, gh) = self.gates(input, h_prev);
        let r = DMatrix::from_fn(hd, batch, |i, b| sigmoid(gi[(i, b)] + gh[(i, b)]));
        let z = DMatrix::from_fn(hd, batch, |i, b| sigmoid(gi[(hd + i, b)] + gh[(hd + i, b)]));
        let gh_n = gh.rows(2 * hd, hd).into_owned();
        let n = DMatrix::from_fn(hd, batch, |i, b| (gi[(2 * hd + i, b)] + r[(i, b)] * gh_n[(i, b)]).tanh());
        let h = DMatrix::from_fn(hd, batch, |i, b| {
            (1.0 - z[(i, b)]) * n[(i, b)] + z[(i, b)] * h_prev[(i, b)]
        });
        (h, r, z, n, gh_n)
    }

    fn normalized_input(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(inputs.nrows(), inputs.ncols(), |i, b| inputs[(i, b)] / self.state_scale[i])
    }

    fn scatter(&self, out: &mut DMatrix<f64>, step: usize, column: &DMatrix<f64>) {
        for b in 0..column.ncols() {
            for i in 0..self.dims {
                out[(i * self.steps + step, b)] = column[(i, b)] * self.state_scale[i];
            }
        }
    }

    /// The emitted control columns, one per step, in physical units (`dims × B` each).
    pub fn emit_columns(&self, inputs: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        let out = self.forward_batch(inputs)?;
        Ok((0..self.steps)
            .map(|k| DMatrix::from_fn(self.dims, inputs.ncols(), |i, b| out[(i * self.steps + k, b)]))
            .collect())
    }
}

impl BranchNet for GruModel {
    fn output_shape(&self) -> (usize, usize) {
        (self.dims, self.steps)
    }

    fn input_dim(&self) -> usize {
        self.dims
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_input(self.dims, inputs)?;
        let batch = inputs.ncols();
        let head = self.head();
        let mut out = DMatrix::zeros(self.dims * self.steps, batch);
        let mut x = self.normalized_input(inputs);
        let mut h = DMatrix::zeros(self.hidden, batch);
        for k in 0..self.steps {
            h = self.cell(&x, &h).0;
            x = head.forward(&self.params, &h);
            self.scatter(&mut out, k, &x);
        }
        Ok(out)
    }

    fn loss_and_grad(
        &self,
        inputs: &DMatrix<f64>,
        loss: &mut dyn FnMut(&DMatrix<f64>) -> (f64, DMatrix<f64>),
    ) -> Result<(f64, Vec<f64>)> {
        check_input(self.dims, inputs)?;
        let batch = inputs.ncols();
        let hd = self.hidden;
        let head = self.head();
        let mut out = DMatrix::zeros(self.dims * self.steps, batch);
        let mut tapes = Vec::with_capacity(self.steps);
        let mut x = self.normalized_input(inputs);
        let mut h = DMatrix::zeros(hd, batch);
        for k in 0..self.steps {
            let (h_new, r, z, n, gh_n) = self.cell(&x, &h);
            let (column, head_tape) = head.forward_tape(&self.params, &h_new);
            self.scatter(&mut out, k, &column);
            tapes.push(StepTape {
                input: std::mem::replace(&mut x, column),
                h_prev: std::mem::replace(&mut h, h_new),
                r,
                z,
                n,
                gh_n,
                head: head_tape,
            });
        }

        let (value, d_out) = loss(&out);
        let (w_in, w_rec, b_in, b_rec, _) = self.offsets();
        let p = &self.params;
        let wi = DMatrixView::from_slice(&p[w_in..w_rec], 3 * hd, self.dims);
        let wh = DMatrixView::from_slice(&p[w_rec..b_in], 3 * hd, hd);
        let mut grad = vec![0.0; p.len()];
        let mut dh_next = DMatrix::zeros(hd, batch);
        let mut dx_next = DMatrix::zeros(self.dims, batch);

        for k in (0..self.steps).rev() {
            let tape = &tapes[k];
            // loss gradient on the normalized column plus the feedback path into step k + 1
            let d_col = DMatrix::from_fn(self.dims, batch, |i, b| {
                d_out[(i * self.steps + k, b)] * self.state_scale[i] + dx_next[(i, b)]
            });
            let dh = head.backward(p, &mut grad, &tape.head, d_col) + &dh_next;

            let mut d_gi = DMatrix::zeros(3 * hd, batch);
            let mut d_gh = DMatrix::zeros(3 * hd, batch);
            let mut dh_prev = DMatrix::zeros(hd, batch);
            for b in 0..batch {
                for i in 0..hd {
                    let (r, z, n) = (tape.r[(i, b)], tape.z[(i, b)], tape.n[(i, b)]);
                    let g = dh[(i, b)];
                    let dn = g * (1.0 - z) * (1.0 - n * n);
                    let dz = g * (tape.h_prev[(i, b)] - n) * z * (1.0 - z);
                    let dr = dn * tape.gh_n[(i, b)] * r * (1.0 - r);
                    d_gi[(i, b)] = dr;
                    d_gi[(hd + i, b)] = dz;
                    d_gi[(2 * hd + i, b)] = dn;
                    d_gh[(i, b)] = dr;
                    d_gh[(hd + i, b)] = dz;
                    d_gh[(2 * hd + i, b)] = dn * r;
                    dh_prev[(i, b)] = g * z;
                }
            }
            let dwi = &d_gi * tape.input.transpose();
            let dwh = &d_gh * tape.h_prev.transpose();
            for (g, v) in grad[w_in..w_rec].iter_mut().zip(dwi.as_slice()) {
                *g += v;
            }
            for (g, v) in grad[w_rec..b_in].iter_mut().zip(dwh.as_slice()) {
                *g += v;
            }
            for i in 0..3 * hd {
                grad[b_in + i] += d_gi.row(i).sum();
                grad[b_rec + i] += d_gh.row(i).sum();
            }
            dh_prev += wh.tr_mul(&d_gh);
            dh_next = dh_prev;
            dx_next = wi.tr_mul(&d_gi);
        }
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_parameter_counts() {
        let m = GruModel::zeros(12, 120, &[120, 120], 50, Activation::Relu).unwrap();
        assert_eq!(GruModel::cell_param_count(12, 120), 48_240);
        assert_eq!(m.param_count(), 78_732);
        assert_eq!(m.output_shape(), (12, 50));
    }

    #[test]
    fn zero_weights_emit_head_bias_chain() {
        let mut m = GruModel::zeros(2, 3, &[4], 5, Activation::Relu).unwrap();
        let (_, _, _, _, head) = m.offsets();
        // head layer 1: 3 -> 4 weights zero, bias 0.5; layer 2: 4 -> 2 weights 1, bias (-1, 2)
        let p = m.params_mut();
        p[head + 12..head + 16].fill(0.5);
        p[head + 16..head + 24].fill(1.0);
        p[head + 24] = -1.0;
        p[head + 25] = 2.0;
        let out = m.forward(&[0.3, -0.7]).unwrap();
        for k in 0..5 {
            assert_abs_diff_eq!(out[k], 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(out[5 + k], 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_step_by_hand() {
        // dims 1, hidden 1, head 1 -> 1 (no hidden layers): c = wo·h + bo
        let m = GruModel::zeros(1, 1, &[], 1, Activation::Relu).unwrap();
        // W_i = [a_r, a_z, a_n], W_h = [u_r, u_z, u_n], b_i, b_h, head (w, b)
        let params = vec![0.5, -0.3, 0.8, 0.2, 0.1, -0.4, 0.05, 0.0, 0.1, -0.2, 0.3, 0.0, 1.5, 0.25];
        let m = m.with_params(params).unwrap();
        let x = 0.9;
        let r = sigmoid(0.5 * x + 0.05 - 0.2);
        let z = sigmoid(-0.3 * x + 0.0 + 0.3);
        let n = (0.8 * x + 0.1 + r * 0.0).tanh();
        let h = (1.0 - z) * n;
        let c = 1.5 * h + 0.25;
        assert_abs_diff_eq!(m.forward(&[x]).unwrap()[0], c, epsilon = 1e-15);
    }

    #[test]
    fn second_step_feeds_back_first_column() {
        let base = GruModel::init(2, 4, &[3], 1, Activation::Tanh, 9).unwrap();
        let two = GruModel::zeros(2, 4, &[3], 2, Activation::Tanh)
            .unwrap()
            .with_params(base.params().to_vec())
            .unwrap();
        let x0 = [0.4, -0.1];
        let first = base.forward(&x0).unwrap();
        let out = two.forward(&x0).unwrap();
        assert_abs_diff_eq!(out[0], first[0], epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], first[1], epsilon = 1e-15);
        // step 2 from scratch: h1 from x0, then cell(c1, h1)
        let x = DMatrix::from_column_slice(2, 1, &x0);
        let h1 = two.cell(&x, &DMatrix::zeros(4, 1)).0;
        let c1 = two.head().forward(two.params(), &h1);
        let h2 = two.cell(&c1, &h1).0;
        let c2 = two.head().forward(two.params(), &h2);
        assert_abs_diff_eq!(out[1], c2[0], epsilon = 1e-15);
        assert_abs_diff_eq!(out[3], c2[1], epsilon = 1e-15);
    }

    #[test]
    fn batch_matches_single() {
        let m = GruModel::init(3, 5, &[4, 4], 4, Activation::Relu, 2)
            .unwrap()
            .with_scaling(vec![1.0, 2.0, 0.5])
            .unwrap();
        let batch = DMatrix::from_fn(3, 5, |i, b| (i as f64 - 1.0) * 0.3 + b as f64 * 0.1);
        let out = m.forward_batch(&batch).unwrap();
        for b in 0..5 {
            let x: Vec<f64> = batch.column(b).iter().copied().collect();
            for (i, v) in m.forward(&x).unwrap().iter().enumerate() {
                assert_abs_diff_eq!(*v, out[(i, b)], epsilon = 1e-12);
            }
        }
        let cols = m.emit_columns(&batch).unwrap();
        assert_eq!(cols.len(), 4);
        assert_abs_diff_eq!(cols[2][(1, 3)], out[(4 + 2, 3)], epsilon = 0.0);
    }
}
