use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gru::{gru_backward, gru_forward_cached, GruCache, GruWeights};
use super::layers::{
    activation_backward, conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool1d_backward,
    maxpool1d_forward,
};
use super::{Activation, LayerSpec, Shape, Tensor};
use crate::error::{AaeError, Result};
use crate::scalar::Scalar;

/// All trainable tensors of a network, grouped per layer in layer order.
/// Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams<T> {
    pub seed: u64,
    pub layers: Vec<Vec<Tensor<T>>>,
}

impl<T: Scalar> ClassifierParams<T> {
    pub fn zeros_like(other: &Self) -> Self {
        ClassifierParams {
            seed: other.seed,
            layers: other
                .layers
                .iter()
                .map(|ts| ts.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flatten()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flatten()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        if !self.same_layout(other) {
            return Err(AaeError::shape("parameter layouts differ"));
        }
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * *y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Flat view of every value in layer/tensor order.
    pub fn flat(&self) -> Vec<T> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// `theta <- theta - lr * grad` on every tensor.
pub fn sgd_step<T: Scalar>(params: &mut ClassifierParams<T>, grads: &ClassifierParams<T>, learning_rate: T) -> Result<()> {
    params.add_scaled(grads, -learning_rate)
}

enum LayerCache<T> {
    Conv { input: Tensor<T>, output: Tensor<T> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dense { input: Vec<T>, pre: Vec<T>, output: Vec<T> },
    Activation { output: Vec<T> },
    Flatten,
    Mask,
    Gru { input: Tensor<T>, cache: GruCache<T> },
}

/// Activations recorded by a forward pass.
pub struct ForwardTrace<T> {
    caches: Vec<LayerCache<T>>,
    shapes: Vec<Vec<usize>>,
    output: Tensor<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    /// Shape of every layer's output, in layer order.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Pre-activation of the single sigmoid output unit, if the network ends in one.
    pub fn logit(&self) -> Option<T> {
        match self.caches.last() {
            Some(LayerCache::Dense { pre, .. }) if pre.len() == 1 => Some(pre[0]),
            _ => None,
        }
    }
}

/// A stack of layers with attached parameters over a fixed input length.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    name: String,
    input_len: usize,
    specs: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    params: ClassifierParams<T>,
}

fn infer_shapes(specs: &[LayerSpec], input_len: usize) -> Result<Vec<Shape>> {
    let mut shapes = vec![Shape::new(1, input_len)];
    for (i, spec) in specs.iter().enumerate() {
        let out = spec.output_shape(shapes[i]).map_err(|e| match e {
            AaeError::Shape(msg) => AaeError::Shape(format!(
                "layer {} ({}) with input {}x{}: {msg}",
                i + 1,
                spec.kind_name(),
                shapes[i].channels,
                shapes[i].len
            )),
            other => other,
        })?;
        if out.len == 0 {
            return Err(AaeError::shape(format!(
                "layer {} ({}) produces an empty output",
                i + 1,
                spec.kind_name()
            )));
        }
        shapes.push(out);
    }
    Ok(shapes)
}

fn glorot_limit(spec: &LayerSpec, input: Shape) -> f64 {
    let (fan_in, fan_out) = match *spec {
        LayerSpec::Conv1d {
            filters,
            kernel_size,
            ..
        } => (input.channels * kernel_size, filters * kernel_size),
        LayerSpec::Dense { units, .. } => (input.size(), units),
        LayerSpec::Gru { hidden } => (hidden + input.channels, hidden),
        _ => (1, 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl<T: Scalar> Network<T> {
    /// Builds the network with Glorot-uniform weights from `seed` and zero biases.
    pub fn new(name: impl Into<String>, specs: Vec<LayerSpec>, input_len: usize, seed: u64) -> Result<Self> {
        let shapes = infer_shapes(&specs, input_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .zip(&shapes)
            .map(|(spec, &input)| {
                let limit = glorot_limit(spec, input);
                spec.param_shapes(input)
                    .into_iter()
                    .map(|shape| {
                        let n = shape.iter().product();
                        let data = if shape.len() == 1 {
                            vec![T::zero(); n]
                        } else {
                            (0..n).map(|_| T::of(rng.gen_range(-limit..limit))).collect()
                        };
                        Tensor::from_vec(&shape, data).expect("shape product matches")
                    })
                    .collect()
            })
            .collect();
        Ok(Network {
            name: name.into(),
            input_len,
            specs,
            shapes,
            params: ClassifierParams { seed, layers },
        })
    }

    /// Same architecture with every parameter zero.
    pub fn zeroed(name: impl Into<String>, specs: Vec<LayerSpec>, input_len: usize) -> Result<Self> {
        let mut net = Self::new(name, specs, input_len, 0)?;
        for t in net.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(net)
    }

    /// Attaches existing parameters, checking every tensor shape.
    pub fn with_params(
        name: impl Into<String>,
        specs: Vec<LayerSpec>,
        input_len: usize,
        params: ClassifierParams<T>,
    ) -> Result<Self> {
        let shapes = infer_shapes(&specs, input_len)?;
        if params.layers.len() != specs.len() {
            return Err(AaeError::shape(format!(
                "{} parameter groups for {} layers",
                params.layers.len(),
                specs.len()
            )));
        }
        for (i, ((spec, input), tensors)) in specs.iter().zip(&shapes).zip(&params.layers).enumerate() {
            let expected = spec.param_shapes(*input);
            let actual: Vec<Vec<usize>> = tensors.iter().map(|t| t.shape().to_vec()).collect();
            if expected != actual {
                return Err(AaeError::shape(format!(
                    "layer {} ({}) expects tensors {expected:?}, got {actual:?}",
                    i + 1,
                    spec.kind_name()
                )));
            }
        }
        Ok(Network {
            name: name.into(),
            input_len,
            specs,
            shapes,
            params,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Input shape followed by each layer's output shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn params(&self) -> &ClassifierParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ClassifierParams<T> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ClassifierParams<T>) -> Result<()> {
        let rebuilt = Self::with_params(self.name.clone(), self.specs.clone(), self.input_len, params)?;
        *self = rebuilt;
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<ForwardTrace<T>> {
        if input.len() != self.input_len {
            return Err(AaeError::shape(format!(
                "network expects input length {}, got {}",
                self.input_len,
                input.len()
            )));
        }
        let mut x = Tensor::map(1, self.input_len, input.to_vec())?;
        let mut mask: Option<Vec<bool>> = None;
        let mut caches = Vec::with_capacity(self.specs.len());
        let mut shapes = Vec::with_capacity(self.specs.len());
        for (spec, tensors) in self.specs.iter().zip(&self.params.layers) {
            let (next, cache) = match *spec {
                LayerSpec::Conv1d { activation, .. } => {
                    let y = conv1d_forward(&x, &tensors[0], tensors[1].data(), activation)?;
                    (y.clone(), LayerCache::Conv { input: x, output: y })
                }
                LayerSpec::Maxpool1d { pool_size } => {
                    let pooled = maxpool1d_forward(&x, pool_size)?;
                    (
                        pooled.output,
                        LayerCache::Pool {
                            input_shape: x.shape().to_vec(),
                            argmax: pooled.argmax,
                        },
                    )
                }
                LayerSpec::Dense { activation, .. } => {
                    let pre = dense_forward(x.data(), &tensors[0], tensors[1].data(), Activation::Linear)?;
                    let out: Vec<T> = pre.iter().map(|v| activation.apply(*v)).collect();
                    (
                        Tensor::map(1, out.len(), out.clone())?,
                        LayerCache::Dense {
                            input: x.into_data(),
                            pre,
                            output: out,
                        },
                    )
                }
                LayerSpec::Activation { activation } => {
                    let shape = x.shape().to_vec();
                    let out: Vec<T> = x.data().iter().map(|v| activation.apply(*v)).collect();
                    (
                        Tensor::from_vec(&shape, out.clone())?,
                        LayerCache::Activation { output: out },
                    )
                }
                LayerSpec::Flatten => {
                    let n = x.len();
                    (Tensor::map(1, n, x.into_data())?, LayerCache::Flatten)
                }
                LayerSpec::Mask { sentinel } => {
                    let sentinel = T::of(sentinel);
                    let m: Vec<bool> = (0..x.width())
                        .map(|t| (0..x.channels()).any(|c| x.row(c)[t] != sentinel))
                        .collect();
                    mask = Some(m);
                    (x, LayerCache::Mask)
                }
                LayerSpec::Gru { .. } => {
                    let steps = x.width();
                    let m = mask.take().unwrap_or_else(|| vec![true; steps]);
                    let w = gru_view(tensors);
                    let (h, cache) = gru_forward_cached(&x, &m, &w)?;
                    (Tensor::map(1, h.len(), h)?, LayerCache::Gru { input: x, cache })
                }
            };
            caches.push(cache);
            shapes.push(next.shape().to_vec());
            x = next;
        }
        Ok(ForwardTrace { caches, shapes, output: x })
    }

    /// Output probability of a network ending in `dense(1, sigmoid)`.
    pub fn predict(&self, input: &[T]) -> Result<T> {
        let trace = self.forward(input)?;
        match trace.output.data() {
            [p] => Ok(*p),
            other => Err(AaeError::shape(format!("network emits {} outputs, expected 1", other.len()))),
        }
    }

    fn check_head(&self) -> Result<()> {
        match self.specs.last() {
            Some(LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            }) => Ok(()),
            _ => Err(AaeError::shape("loss needs a dense(1, sigmoid) output layer")),
        }
    }

    /// Binary cross-entropy computed from the output logit.
    pub fn loss(&self, input: &[T], target: bool) -> Result<T> {
        self.check_head()?;
        let trace = self.forward(input)?;
        Ok(bce_from_logit(trace.logit().expect("dense head"), target))
    }

    /// Loss, probability and exact gradients of the loss for one example.
    pub fn loss_and_grad(&self, input: &[T], target: bool) -> Result<(T, T, ClassifierParams<T>)> {
        self.check_head()?;
        let trace = self.forward(input)?;
        let z = trace.logit().expect("dense head");
        let p = trace.output.data()[0];
        let grads = self.backward(&trace, target)?;
        Ok((bce_from_logit(z, target), p, grads))
    }

    /// Gradients of the BCE loss w.r.t. every parameter, given a forward trace.
    pub fn backward(&self, trace: &ForwardTrace<T>, target: bool) -> Result<ClassifierParams<T>> {
        self.backprop(trace, target, false).map(|(g, _)| g)
    }

    /// Gradient of the loss w.r.t. the network input.
    pub fn input_gradient(&self, input: &[T], target: bool) -> Result<Vec<T>> {
        let trace = self.forward(input)?;
        self.backprop(&trace, target, true).map(|(_, gx)| gx)
    }

    fn backprop(&self, trace: &ForwardTrace<T>, target: bool, input_grad: bool) -> Result<(ClassifierParams<T>, Vec<T>)> {
        self.check_head()?;
        let y = if target { T::one() } else { T::zero() };
        let mut grads = ClassifierParams::zeros_like(&self.params);
        let last = self.specs.len() - 1;
        // d loss / d output-of-layer, flat
        let mut grad: Vec<T> = Vec::new();
        for i in (0..self.specs.len()).rev() {
            let tensors = &self.params.layers[i];
            let want_input = i > 0 || input_grad;
            grad = match (&self.specs[i], &trace.caches[i]) {
                (LayerSpec::Dense { activation, .. }, LayerCache::Dense { input, output, .. }) => {
                    let grad_pre = if i == last {
                        // sigmoid + BCE collapse to p - y
                        vec![output[0] - y]
                    } else {
                        activation_backward(*activation, output, &grad)
                    };
                    let (gx, gw, gb) = dense_backward(input, &tensors[0], &grad_pre)?;
                    grads.layers[i][0] = gw;
                    grads.layers[i][1] = Tensor::vector(gb);
                    gx
                }
                (LayerSpec::Conv1d { activation, .. }, LayerCache::Conv { input, output }) => {
                    let grad_pre = activation_backward(*activation, output.data(), &grad);
                    let (gx, gw, gb) = conv1d_backward(input, &tensors[0], &grad_pre, want_input)?;
                    grads.layers[i][0] = gw;
                    grads.layers[i][1] = Tensor::vector(gb);
                    gx.map(Tensor::into_data).unwrap_or_default()
                }
                (LayerSpec::Maxpool1d { .. }, LayerCache::Pool { input_shape, argmax }) => {
                    maxpool1d_backward(input_shape, argmax, &grad)?.into_data()
                }
                (LayerSpec::Activation { activation }, LayerCache::Activation { output }) => {
                    activation_backward(*activation, output, &grad)
                }
                (LayerSpec::Flatten, LayerCache::Flatten) | (LayerSpec::Mask { .. }, LayerCache::Mask) => grad,
                (LayerSpec::Gru { .. }, LayerCache::Gru { input, cache }) => {
                    let w = gru_view(tensors);
                    let (gx, g) = gru_backward(input, &w, cache, &grad)?;
                    let hidden = w.hidden();
                    let cols = tensors[0].shape()[1];
                    let mat = |v: Vec<T>| Tensor::from_vec(&[hidden, cols], v);
                    grads.layers[i] = vec![
                        mat(g.w_z)?,
                        Tensor::vector(g.b_z),
                        mat(g.w_r)?,
                        Tensor::vector(g.b_r),
                        mat(g.w_h)?,
                        Tensor::vector(g.b_h),
                    ];
                    gx.into_data()
                }
                _ => return Err(AaeError::shape("forward trace does not match network layers")),
            };
        }
        Ok((grads, grad))
    }
}

fn gru_view<T: Scalar>(tensors: &[Tensor<T>]) -> GruWeights<'_, T> {
    GruWeights {
        w_z: &tensors[0],
        b_z: tensors[1].data(),
        w_r: &tensors[2],
        b_r: tensors[3].data(),
        w_h: &tensors[4],
        b_h: tensors[5].data(),
    }
}

/// `-[y ln p + (1-y) ln(1-p)]` with `p = sigmoid(z)`, evaluated from `z`.
pub(crate) fn bce_from_logit<T: Scalar>(z: T, target: bool) -> T {
    if target {
        (-z).softplus()
    } else {
        z.softplus()
    }
}
