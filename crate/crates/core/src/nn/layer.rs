use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{DarnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer `act(x W + b)` with `W` of shape `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            weights: Matrix::zeros(input, output),
            bias: vec![0.0; output],
            activation,
        }
    }

    /// Glorot-uniform weights in `[-sqrt(6/(in+out)), sqrt(6/(in+out))]`, zero bias.
    pub fn glorot(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut layer = Self::zeros(input, output, activation);
        for w in layer.weights.as_mut_slice() {
            *w = rng.random_range(-limit..=limit);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        LayerGrad {
            weights: Matrix::zeros(layer.input_dim(), layer.output_dim()),
            bias: vec![0.0; layer.output_dim()],
        }
    }
}

/// Activations of one stack of layers, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StackCache {
    /// Input to each layer, after dropout.
    inputs: Vec<Matrix>,
    /// Inverted-dropout scale per input entry (0 or `1/(1-p)`), if dropout was active.
    masks: Vec<Option<Vec<f64>>>,
    pre_activations: Vec<Matrix>,
    output: Matrix,
}

impl StackCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

pub(crate) fn stack_forward(
    layers: &[Dense],
    x: &Matrix,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<StackCache> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut masks = Vec::with_capacity(layers.len());
    let mut pre_activations = Vec::with_capacity(layers.len());
    let mut current = x.clone();
    let mut dropout = dropout;
    for layer in layers {
        if current.cols() != layer.input_dim() {
            return Err(DarnError::DimensionMismatch {
                expected: layer.input_dim(),
                got: current.cols(),
            });
        }
        let mask = match dropout.as_mut() {
            Some((p, rng)) if *p > 0.0 => {
                let keep = 1.0 / (1.0 - *p);
                let mask: Vec<f64> = (0..current.as_slice().len())
                    .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                    .collect();
                for (v, m) in current.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        let mut pre = current.matmul(&layer.weights)?;
        pre.add_row_vector(&layer.bias);
        let act = layer.activation;
        let next = pre.map(|v| act.apply(v));
        inputs.push(current);
        masks.push(mask);
        pre_activations.push(pre);
        current = next;
    }
    Ok(StackCache {
        inputs,
        masks,
        pre_activations,
        output: current,
    })
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the stack input.
pub(crate) fn stack_backward(
    layers: &[Dense],
    cache: &StackCache,
    grad_output: Matrix,
    grads: &mut [LayerGrad],
) -> Result<Matrix> {
    if grad_output.shape() != cache.output.shape() {
        return Err(DarnError::DimensionMismatch {
            expected: cache.output.as_slice().len(),
            got: grad_output.as_slice().len(),
        });
    }
    let mut upstream = grad_output;
    for (l, layer) in layers.iter().enumerate().rev() {
        let pre = &cache.pre_activations[l];
        let act = layer.activation;
        let mut delta = upstream;
        for (d, p) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()) {
            *d *= act.derivative(*p);
        }
        let w_grad = cache.inputs[l].t_matmul(&delta)?;
        grads[l].weights.add_assign(&w_grad);
        for (b, s) in grads[l].bias.iter_mut().zip(delta.column_sums()) {
            *b += s;
        }
        let mut grad_in = delta.matmul_t(&layer.weights)?;
        if let Some(mask) = &cache.masks[l] {
            for (g, m) in grad_in.as_mut_slice().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        upstream = grad_in;
    }
    Ok(upstream)
}
