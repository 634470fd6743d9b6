//! A deliberately small neural-network engine.
//!
//! Only the layers the estimator's classifiers need exist here: valid 1-D
//! convolution, non-overlapping max pooling, dense, flatten, a padding mask
//! and a GRU. Gradients are written out by hand and checked against central
//! finite differences in the test suite.

mod gru;
mod io;
mod layers;
mod network;

pub use gru::{gru_backward, gru_forward, gru_forward_cached, GruCache, GruGrads, GruWeights};
pub use io::{read_params, write_params, ParamsHeader};
pub use layers::{
    activation_backward, conv1d_backward, conv1d_forward, dense_backward, dense_forward,
    maxpool1d_backward, maxpool1d_forward, Pooled,
};
pub use network::{sgd_step, ClassifierParams, ForwardTrace, Network};

use serde::{Deserialize, Serialize};

use crate::error::{AaeError, Result};
use crate::scalar::Scalar;

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AaeError::shape(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// A `channels x len` activation map.
    pub fn map(channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        Self::from_vec(&[channels, len], data)
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Channels of a 2-D map (1 for vectors).
    pub fn channels(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Length of each channel.
    pub fn width(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn row(&self, c: usize) -> &[T] {
        let w = self.width();
        &self.data[c * w..(c + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// `channels x len` shape of an activation map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn new(channels: usize, len: usize) -> Self {
        Shape { channels, len }
    }

    pub fn size(self) -> usize {
        self.channels * self.len
    }
}

/// One layer of a network, before parameters are attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_size: usize,
        activation: Activation,
    },
    Maxpool1d {
        pool_size: usize,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    Activation {
        activation: Activation,
    },
    Flatten,
    /// Marks trailing entries equal to `sentinel` as padding for a later GRU.
    Mask {
        sentinel: f64,
    },
    Gru {
        hidden: usize,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel_size: usize, activation: Activation) -> Self {
        LayerSpec::Conv1d {
            filters,
            kernel_size,
            activation,
        }
    }

    pub fn pool(pool_size: usize) -> Self {
        LayerSpec::Maxpool1d { pool_size }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Maxpool1d { .. } => "maxpool1d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Mask { .. } => "mask",
            LayerSpec::Gru { .. } => "gru",
        }
    }

    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                ..
            } => {
                if filters == 0 || kernel_size == 0 {
                    return Err(AaeError::shape("conv1d needs filters >= 1 and kernel_size >= 1"));
                }
                if input.len < kernel_size {
                    return Err(AaeError::shape(format!(
                        "conv1d kernel {kernel_size} longer than input length {}",
                        input.len
                    )));
                }
                Ok(Shape::new(filters, input.len - kernel_size + 1))
            }
            LayerSpec::Maxpool1d { pool_size } => {
                if pool_size == 0 {
                    return Err(AaeError::shape("maxpool1d needs pool_size >= 1"));
                }
                if input.len < pool_size {
                    return Err(AaeError::shape(format!(
                        "maxpool1d pool {pool_size} longer than input length {}",
                        input.len
                    )));
                }
                Ok(Shape::new(input.channels, input.len / pool_size))
            }
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return Err(AaeError::shape("dense needs units >= 1"));
                }
                Ok(Shape::new(1, units))
            }
            LayerSpec::Activation { .. } | LayerSpec::Mask { .. } => Ok(input),
            LayerSpec::Flatten => Ok(Shape::new(1, input.size())),
            LayerSpec::Gru { hidden } => {
                if hidden == 0 {
                    return Err(AaeError::shape("gru needs hidden >= 1"));
                }
                Ok(Shape::new(1, hidden))
            }
        }
    }

    /// Parameter tensor shapes for a given input shape.
    pub fn param_shapes(&self, input: Shape) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                ..
            } => vec![vec![filters, input.channels, kernel_size], vec![filters]],
            LayerSpec::Dense { units, .. } => vec![vec![units, input.size()], vec![units]],
            LayerSpec::Gru { hidden } => {
                let w = vec![hidden, hidden + input.channels];
                vec![w.clone(), vec![hidden], w.clone(), vec![hidden], w, vec![hidden]]
            }
            _ => Vec::new(),
        }
    }
}
