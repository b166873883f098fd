use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` given output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Uniform init scaled by fan-in for ReLU layers and by the fan average
/// otherwise.
pub fn init_weight(rng: &mut impl Rng, fan_in: usize, fan_out: usize, activation: Activation) -> Tensor2 {
    let limit = match activation {
        Activation::Relu => (6.0 / fan_in as f64).sqrt(),
        Activation::Tanh | Activation::Identity => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor2::from_vec(fan_in, fan_out, data).expect("consistent shape")
}

/// Fully connected layer `y = σ(x·W + b)`, `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCache {
    pub input: Tensor2,
    pub pre: Tensor2,
    pub output: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor2,
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl DenseLayer {
    pub fn new(rng: &mut impl Rng, input: usize, output: usize, activation: Activation) -> Self {
        Self { weight: init_weight(rng, input, output, activation), bias: Tensor2::zeros(1, output), activation }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, DenseCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("dense_forward", format!("input {:?} into {:?} layer", x.shape(), self.weight.shape())));
        }
        let mut pre = x.matmul(&self.weight)?;
        for r in 0..pre.rows() {
            for (z, b) in pre.row_mut(r).iter_mut().zip(self.bias.data()) {
                *z += b;
            }
        }
        let output = pre.map(|z| self.activation.apply(z));
        Ok((output.clone(), DenseCache { input: x.clone(), pre, output }))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Tensor2) -> Result<DenseGrads> {
        if upstream.shape() != cache.output.shape() {
            return Err(Error::shape("dense_backward", format!("upstream {:?} vs output {:?}", upstream.shape(), cache.output.shape())));
        }
        let mut delta = upstream.clone();
        for ((d, &z), &y) in delta.data_mut().iter_mut().zip(cache.pre.data()).zip(cache.output.data()) {
            *d *= self.activation.derivative(z, y);
        }
        Ok(DenseGrads {
            weight: cache.input.t_matmul(&delta)?,
            bias: delta.column_sum(),
            input: delta.matmul_t(&self.weight)?,
        })
    }
}

/// Graph convolution `H' = σ(A·H·W)` without bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub weight: Tensor2,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnCache {
    pub adjacency: Tensor2,
    pub input: Tensor2,
    pub aggregated: Tensor2,
    pub pre: Tensor2,
    pub output: Tensor2,
}

impl GcnLayer {
    pub fn new(rng: &mut impl Rng, input: usize, output: usize) -> Self {
        Self { weight: init_weight(rng, input, output, Activation::Relu), activation: Activation::Relu }
    }

    pub fn forward(&self, adjacency: &Tensor2, h: &Tensor2) -> Result<(Tensor2, GcnCache)> {
        if adjacency.rows() != adjacency.cols() || adjacency.cols() != h.rows() {
            return Err(Error::shape("gcn_forward", format!("A {:?} with H {:?}", adjacency.shape(), h.shape())));
        }
        if h.cols() != self.weight.rows() {
            return Err(Error::shape("gcn_forward", format!("H {:?} with W {:?}", h.shape(), self.weight.shape())));
        }
        let aggregated = h.aggregate_by(adjacency)?;
        let pre = aggregated.matmul(&self.weight)?;
        let output = pre.map(|z| self.activation.apply(z));
        Ok((
            output.clone(),
            GcnCache { adjacency: adjacency.clone(), input: h.clone(), aggregated, pre, output },
        ))
    }

    /// Returns `(∂L/∂H, ∂L/∂W)`.
    pub fn backward(&self, cache: &GcnCache, upstream: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        if upstream.shape() != cache.output.shape() {
            return Err(Error::shape("gcn_backward", format!("upstream {:?} vs output {:?}", upstream.shape(), cache.output.shape())));
        }
        let mut delta = upstream.clone();
        for ((d, &z), &y) in delta.data_mut().iter_mut().zip(cache.pre.data()).zip(cache.output.data()) {
            *d *= self.activation.derivative(z, y);
        }
        let d_weight = cache.aggregated.t_matmul(&delta)?;
        let d_input = cache.adjacency.t_matmul(&delta)?.matmul_t(&self.weight)?;
        Ok((d_input, d_weight))
    }
}
