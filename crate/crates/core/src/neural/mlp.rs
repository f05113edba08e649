use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_input, check_scale, dense_param_count, he_uniform, Activation, Architecture, BranchNet};
use crate::error::{Error, Result};

/// Fully connected branch network: affine layers with a hidden activation
/// and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    widths: Vec<usize>,
    activation: Activation,
    dims: usize,
    input_scale: Vec<f64>,
    output_scale: Vec<f64>,
    params: Vec<f64>,
}

/// Offsets of one layer's weights (column-major `out × in`) and biases.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

fn layers(widths: &[usize]) -> Vec<Layer> {
    let mut offset = 0;
    widths
        .windows(2)
        .map(|w| {
            let layer = Layer {
                fan_in: w[0],
                fan_out: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
        .collect()
}

pub(crate) fn affine(params: &[f64], layer: Layer, input: &DMatrix<f64>) -> DMatrix<f64> {
    let w = DMatrixView::from_slice(&params[layer.weights..layer.bias], layer.fan_out, layer.fan_in);
    let b = DVectorView::from_slice(&params[layer.bias..layer.bias + layer.fan_out], layer.fan_out);
    let mut z = w * input;
    for mut col in z.column_iter_mut() {
        col += &b;
    }
    z
}

/// Accumulates the weight and bias gradients of one affine layer and returns
/// the gradient with respect to its input.
pub(crate) fn affine_backward(
    params: &[f64],
    grad: &mut [f64],
    layer: Layer,
    input: &DMatrix<f64>,
    d_out: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dw = d_out * input.transpose();
    for (g, v) in grad[layer.weights..layer.bias].iter_mut().zip(dw.as_slice()) {
        *g += v;
    }
    for (r, g) in grad[layer.bias..layer.bias + layer.fan_out].iter_mut().enumerate() {
        *g += d_out.row(r).sum();
    }
    let w = DMatrixView::from_slice(&params[layer.weights..layer.bias], layer.fan_out, layer.fan_in);
    w.tr_mul(d_out)
}

/// Dense layer chain shared with the recurrent head.
#[derive(Debug, Clone)]
pub(crate) struct DenseStack {
    layers: Vec<Layer>,
    activation: Activation,
}

pub(crate) struct DenseTape {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl DenseStack {
    pub(crate) fn new(widths: &[usize], activation: Activation, offset: usize) -> Self {
        let layers = layers(widths)
            .into_iter()
            .map(|l| Layer {
                weights: l.weights + offset,
                bias: l.bias + offset,
                ..l
            })
            .collect();
        Self { layers, activation }
    }

    pub(crate) fn forward(&self, params: &[f64], input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(params, *layer, &a);
            a = if i == last { z } else { z.map(|v| self.activation.apply(v)) };
        }
        a
    }

    pub(crate) fn forward_tape(&self, params: &[f64], input: &DMatrix<f64>) -> (DMatrix<f64>, DenseTape) {
        let mut tape = DenseTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut a = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(params, *layer, &a);
            tape.inputs.push(a);
            a = if i == last { z.clone() } else { z.map(|v| self.activation.apply(v)) };
            tape.pre.push(z);
        }
        (a, tape)
    }

    /// Returns the gradient with respect to the stack input.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        tape: &DenseTape,
        d_out: DMatrix<f64>,
    ) -> DMatrix<f64> {
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                delta.zip_apply(&tape.pre[i], |d, z| *d *= self.activation.derivative(z));
            }
            delta = affine_backward(params, grad, self.layers[i], &tape.inputs[i], &delta);
        }
        delta
    }
}

impl MlpModel {
    /// He-uniform weights and zero biases, deterministic in `seed`.
    ///
    /// The last width must equal `dims · ℓ`.
    pub fn init(widths: &[usize], activation: Activation, dims: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(widths, activation, dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in layers(widths) {
            he_uniform(&mut rng, layer.fan_in, &mut model.params[layer.weights..layer.bias]);
        }
        Ok(model)
    }

    pub fn zeros(widths: &[usize], activation: Activation, dims: usize) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer widths {widths:?}")));
        }
        let out = widths[widths.len() - 1];
        if dims == 0 || out % dims != 0 {
            return Err(Error::Shape {
                expected: format!("output width divisible by {dims} state dimensions"),
                found: out.to_string(),
            });
        }
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            dims,
            input_scale: vec![1.0; widths[0]],
            output_scale: vec![1.0; dims],
            params: vec![0.0; dense_param_count(widths)],
        })
    }

    /// Fixed input divisors and per-dimension output multipliers.
    pub fn with_scaling(mut self, input_scale: Vec<f64>, output_scale: Vec<f64>) -> Result<Self> {
        check_scale(&input_scale, self.widths[0])?;
        check_scale(&output_scale, self.dims)?;
        self.input_scale = input_scale;
        self.output_scale = output_scale;
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

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.output_scale
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::Mlp {
            widths: self.widths.clone(),
            activation: self.activation,
            dims: self.dims,
            input_scale: self.input_scale.clone(),
            output_scale: self.output_scale.clone(),
        }
    }

    fn stack(&self) -> DenseStack {
        DenseStack::new(&self.widths, self.activation, 0)
    }

    fn normalize(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = inputs.clone();
        for mut col in x.column_iter_mut() {
            for (v, s) in col.iter_mut().zip(&self.input_scale) {
                *v /= s;
            }
        }
        x
    }

    fn output_multipliers(&self) -> Vec<f64> {
        let per_dim = self.widths[self.widths.len() - 1] / self.dims;
        self.output_scale
            .iter()
            .flat_map(|s| std::iter::repeat_n(*s, per_dim))
            .collect()
    }
}

impl BranchNet for MlpModel {
    fn output_shape(&self) -> (usize, usize) {
        (self.dims, self.widths[self.widths.len() - 1] / self.dims)
    }

    fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_input(self.widths[0], inputs)?;
        let mut out = self.stack().forward(&self.params, &self.normalize(inputs));
        let mult = self.output_multipliers();
        for mut col in out.column_iter_mut() {
            col.iter_mut().zip(&mult).for_each(|(v, s)| *v *= s);
        }
        Ok(out)
    }

    fn loss_and_grad(
        &self,
        inputs: &DMatrix<f64>,
        loss: &mut dyn FnMut(&DMatrix<f64>) -> (f64, DMatrix<f64>),
    ) -> Result<(f64, Vec<f64>)> {
        check_input(self.widths[0], inputs)?;
        let stack = self.stack();
        let (raw, tape) = stack.forward_tape(&self.params, &self.normalize(inputs));
        let mult = self.output_multipliers();
        let mut out = raw;
        for mut col in out.column_iter_mut() {
            col.iter_mut().zip(&mult).for_each(|(v, s)| *v *= s);
        }
        let (value, mut d_out) = loss(&out);
        for mut col in d_out.column_iter_mut() {
            col.iter_mut().zip(&mult).for_each(|(v, s)| *v *= s);
        }
        let mut grad = vec![0.0; self.params.len()];
        stack.backward(&self.params, &mut grad, &tape, d_out);
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn parameter_counts() {
        let m = MlpModel::zeros(&[2, 3, 1], Activation::Relu, 1).unwrap();
        assert_eq!(m.param_count(), 13);
        let mut widths = vec![12];
        widths.extend([120; 11]);
        widths.push(600);
        let m = MlpModel::zeros(&widths, Activation::Relu, 12).unwrap();
        assert_eq!(widths.len() - 1, 12);
        assert_eq!(m.param_count(), 219_360);
        assert_eq!(m.output_shape(), (12, 50));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpModel::zeros(&[12], Activation::Relu, 12).is_err());
        assert!(MlpModel::zeros(&[12, 10, 601], Activation::Relu, 12).is_err());
        let m = MlpModel::zeros(&[3, 4, 6], Activation::Relu, 2).unwrap();
        assert!(m.forward(&[1.0, 2.0]).is_err());
        assert!(m.clone().with_params(vec![0.0; 3]).is_err());
        assert!(m.with_scaling(vec![1.0; 3], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(&[12, 8, 24], Activation::Relu, 12).unwrap();
        assert!(m.forward(&[0.7; 12]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_affine_layer() {
        // y = 2x + 0.5
        let m = MlpModel::zeros(&[1, 1], Activation::Relu, 1)
            .unwrap()
            .with_params(vec![2.0, 0.5])
            .unwrap();
        assert_eq!(m.forward(&[3.0]).unwrap(), vec![6.5]);
        // negative output passes through: no activation on the last layer
        assert_eq!(m.forward(&[-3.0]).unwrap(), vec![-5.5]);
    }

    #[test]
    fn hidden_relu_by_hand() {
        // hidden h = relu([1, -1] x), y = h1 + h2 + 1
        let m = MlpModel::zeros(&[1, 2, 1], Activation::Relu, 1)
            .unwrap()
            .with_params(vec![1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
            .unwrap();
        assert_eq!(m.forward(&[2.0]).unwrap(), vec![3.0]);
        assert_eq!(m.forward(&[-2.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn deterministic_init() {
        let a = MlpModel::init(&[12, 16, 24], Activation::Relu, 12, 3).unwrap();
        let b = MlpModel::init(&[12, 16, 24], Activation::Relu, 12, 3).unwrap();
        let c = MlpModel::init(&[12, 16, 24], Activation::Relu, 12, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.params()[..12 * 16].iter().all(|w| w.abs() <= limit));
        assert!(a.params()[12 * 16..12 * 16 + 16].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MlpModel::init(&[12, 20, 20, 36], Activation::Relu, 12, 1)
            .unwrap()
            .with_scaling(vec![2.0; 12], (1..=12).map(f64::from).collect())
            .unwrap();
        let batch = DMatrix::from_fn(12, 7, |_, _| rng.random_range(-2.0..2.0));
        let out = m.forward_batch(&batch).unwrap();
        for b in 0..7 {
            let x: Vec<f64> = batch.column(b).iter().copied().collect();
            let single = m.forward(&x).unwrap();
            for (i, v) in single.iter().enumerate() {
                assert_abs_diff_eq!(*v, out[(i, b)], epsilon = 1e-12);
            }
        }
    }
}
