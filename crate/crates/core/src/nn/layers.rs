use super::{Activation, Tensor};
use crate::error::{AaeError, Result};
use crate::scalar::Scalar;

/// Valid cross-correlation, stride 1: `out[f][j] = act(b[f] + sum_{c,k} w[f][c][k] * x[c][j+k])`.
///
/// `weights` has shape `(filters, channels, kernel)`.
pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    activation: Activation,
) -> Result<Tensor<T>> {
    let (filters, channels, kernel) = conv_dims(weights)?;
    let len = input.width();
    if input.channels() != channels {
        return Err(AaeError::shape(format!(
            "conv1d expects {channels} input channels, got {}",
            input.channels()
        )));
    }
    if bias.len() != filters {
        return Err(AaeError::shape(format!("conv1d bias has {} entries for {filters} filters", bias.len())));
    }
    if len < kernel {
        return Err(AaeError::shape(format!("conv1d kernel {kernel} longer than input length {len}")));
    }
    let out_len = len - kernel + 1;
    let w = weights.data();
    let mut out = vec![T::zero(); filters * out_len];
    for (f, row) in out.chunks_exact_mut(out_len).enumerate() {
        row.iter_mut().for_each(|v| *v = bias[f]);
        for c in 0..channels {
            let x = input.row(c);
            for k in 0..kernel {
                let wk = w[(f * channels + c) * kernel + k];
                for (o, xv) in row.iter_mut().zip(&x[k..k + out_len]) {
                    *o += wk * *xv;
                }
            }
        }
        if activation != Activation::Linear {
            row.iter_mut().for_each(|v| *v = activation.apply(*v));
        }
    }
    Tensor::map(filters, out_len, out)
}

fn conv_dims<T: Scalar>(weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *weights.shape() {
        [f, c, k] => Ok((f, c, k)),
        ref other => Err(AaeError::shape(format!("conv1d weights must be 3-D, got {other:?}"))),
    }
}

/// Turns a gradient w.r.t. an activation's output into one w.r.t. its input.
pub fn activation_backward<T: Scalar>(activation: Activation, output: &[T], grad_output: &[T]) -> Vec<T> {
    match activation {
        Activation::Linear => grad_output.to_vec(),
        _ => output
            .iter()
            .zip(grad_output)
            .map(|(y, g)| activation.derivative_from_output(*y) * *g)
            .collect(),
    }
}

/// Backward pass of [`conv1d_forward`] from the gradient w.r.t. the
/// pre-activation. Returns `(grad_input, grad_weights, grad_bias)`;
/// `grad_input` is `None` when not requested.
pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_pre: &[T],
    want_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Vec<T>)> {
    let (filters, channels, kernel) = conv_dims(weights)?;
    let len = input.width();
    let out_len = len + 1 - kernel;
    if grad_pre.len() != filters * out_len {
        return Err(AaeError::shape("conv1d gradient does not match output shape"));
    }
    let w = weights.data();
    let mut grad_w = vec![T::zero(); w.len()];
    let mut grad_b = vec![T::zero(); filters];
    let mut grad_x = if want_input_grad {
        Some(vec![T::zero(); channels * len])
    } else {
        None
    };
    for (f, g) in grad_pre.chunks_exact(out_len).enumerate() {
        grad_b[f] = g.iter().copied().sum();
        for c in 0..channels {
            let x = input.row(c);
            for k in 0..kernel {
                let idx = (f * channels + c) * kernel + k;
                grad_w[idx] = g
                    .iter()
                    .zip(&x[k..k + out_len])
                    .fold(T::zero(), |acc, (gv, xv)| acc + *gv * *xv);
                if let Some(gx) = grad_x.as_mut() {
                    let wk = w[idx];
                    let dst = &mut gx[c * len + k..c * len + k + out_len];
                    for (d, gv) in dst.iter_mut().zip(g) {
                        *d += wk * *gv;
                    }
                }
            }
        }
    }
    let grad_x = grad_x.map(|d| Tensor::map(channels, len, d)).transpose()?;
    Ok((grad_x, Tensor::from_vec(weights.shape(), grad_w)?, grad_b))
}

/// Output of [`maxpool1d_forward`] with the flat input index of each max.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Non-overlapping max pooling with stride `pool_size`; a trailing partial
/// window is dropped and ties go to the lowest index.
pub fn maxpool1d_forward<T: Scalar>(input: &Tensor<T>, pool_size: usize) -> Result<Pooled<T>> {
    let len = input.width();
    if pool_size == 0 || len < pool_size {
        return Err(AaeError::shape(format!(
            "maxpool1d pool {pool_size} does not fit input length {len}"
        )));
    }
    let channels = input.channels();
    let out_len = len / pool_size;
    let mut out = Vec::with_capacity(channels * out_len);
    let mut argmax = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let row = input.row(c);
        for j in 0..out_len {
            let start = j * pool_size;
            let mut best = start;
            for i in start + 1..start + pool_size {
                if row[i] > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            argmax.push(c * len + best);
        }
    }
    Ok(Pooled {
        output: Tensor::map(channels, out_len, out)?,
        argmax,
    })
}

/// Routes each output gradient to the input position that won its window.
pub fn maxpool1d_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], grad_output: &[T]) -> Result<Tensor<T>> {
    if argmax.len() != grad_output.len() {
        return Err(AaeError::shape("maxpool1d gradient does not match output shape"));
    }
    let mut grad = Tensor::zeros(input_shape);
    let data = grad.data_mut();
    for (&i, g) in argmax.iter().zip(grad_output) {
        data[i] += *g;
    }
    Ok(grad)
}

/// `act(W x + b)` with `W` of shape `(units, inputs)`.
pub fn dense_forward<T: Scalar>(
    input: &[T],
    weights: &Tensor<T>,
    bias: &[T],
    activation: Activation,
) -> Result<Vec<T>> {
    let (units, inputs) = dense_dims(weights)?;
    if inputs != input.len() || bias.len() != units {
        return Err(AaeError::shape(format!(
            "dense layer {units}x{inputs} cannot take {} inputs with {} biases",
            input.len(),
            bias.len()
        )));
    }
    Ok(weights
        .data()
        .chunks_exact(inputs)
        .zip(bias)
        .map(|(row, b)| {
            let z = row
                .iter()
                .zip(input)
                .fold(*b, |acc, (w, x)| acc + *w * *x);
            activation.apply(z)
        })
        .collect())
}

fn dense_dims<T: Scalar>(weights: &Tensor<T>) -> Result<(usize, usize)> {
    match *weights.shape() {
        [u, i] => Ok((u, i)),
        ref other => Err(AaeError::shape(format!("dense weights must be 2-D, got {other:?}"))),
    }
}

/// Backward pass of [`dense_forward`] from the pre-activation gradient.
/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Scalar>(
    input: &[T],
    weights: &Tensor<T>,
    grad_pre: &[T],
) -> Result<(Vec<T>, Tensor<T>, Vec<T>)> {
    let (units, inputs) = dense_dims(weights)?;
    if grad_pre.len() != units || input.len() != inputs {
        return Err(AaeError::shape("dense gradient does not match layer shape"));
    }
    let mut grad_x = vec![T::zero(); inputs];
    let mut grad_w = Vec::with_capacity(units * inputs);
    for (row, g) in weights.data().chunks_exact(inputs).zip(grad_pre) {
        grad_w.extend(input.iter().map(|x| *g * *x));
        for (gx, w) in grad_x.iter_mut().zip(row) {
            *gx += *g * *w;
        }
    }
    Ok((grad_x, Tensor::from_vec(weights.shape(), grad_w)?, grad_pre.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn valid_conv_output_length() {
        let x = Tensor::map(1, 64, vec![0.5; 64]).unwrap();
        let w = Tensor::from_vec(&[16, 1, 3], vec![0.1; 48]).unwrap();
        let y = conv1d_forward(&x, &w, &[0.0; 16], Activation::Tanh).unwrap();
        assert_eq!(y.shape(), &[16, 62]);
    }

    #[test]
    fn zero_conv_with_tanh_is_zero() {
        let x = Tensor::map(2, 10, (0..20).map(f64::from).collect()).unwrap();
        let w = Tensor::zeros(&[4, 2, 3]);
        let y = conv1d_forward(&x, &w, &[0.0; 4], Activation::Tanh).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&mut rng, 8);
        let w = random(&mut rng, 3);
        let b = 0.25;
        let y = conv1d_forward(
            &Tensor::map(1, 8, x.clone()).unwrap(),
            &Tensor::from_vec(&[1, 1, 3], w.clone()).unwrap(),
            &[b],
            Activation::Linear,
        )
        .unwrap();
        assert_eq!(y.len(), 6);
        for j in 0..6 {
            let mut expected = b;
            for i in 0..3 {
                expected += w[i] * x[j + i];
            }
            assert!((y.data()[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn conv_rejects_short_input() {
        let x = Tensor::map(1, 2, vec![1.0, 2.0]).unwrap();
        let w = Tensor::zeros(&[1, 1, 3]);
        assert!(matches!(
            conv1d_forward(&x, &w, &[0.0], Activation::Linear),
            Err(AaeError::Shape(_))
        ));
    }

    #[test]
    fn pool_length_and_ties() {
        let x = Tensor::map(1, 62, vec![3.0; 62]).unwrap();
        let p = maxpool1d_forward(&x, 3).unwrap();
        assert_eq!(p.output.len(), 20);
        assert!(p.output.data().iter().all(|v| *v == 3.0));
        let firsts: Vec<usize> = (0..20).map(|j| j * 3).collect();
        assert_eq!(p.argmax, firsts);
        assert!(maxpool1d_forward(&Tensor::map(1, 2, vec![0.0; 2]).unwrap(), 3).is_err());
    }

    #[test]
    fn pool_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::map(3, 17, random(&mut rng, 51)).unwrap();
        let p = maxpool1d_forward(&x, 4).unwrap();
        assert_eq!(p.output.shape(), &[3, 4]);
        for c in 0..3 {
            for j in 0..4 {
                let window = &x.row(c)[j * 4..j * 4 + 4];
                let m = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(p.output.row(c)[j], m);
            }
        }
    }

    #[test]
    fn dense_basics() {
        let w = Tensor::zeros(&[1, 5]);
        let y = dense_forward(&[1.0, -2.0, 3.0, 4.0, 5.0], &w, &[0.0], Activation::Sigmoid).unwrap();
        assert_eq!(y, vec![0.5]);

        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.3, -7.0, 2.5];
        assert_eq!(dense_forward(&x, &eye, &[0.0; 3], Activation::Linear).unwrap(), x.to_vec());

        assert!(dense_forward(&x, &Tensor::zeros(&[2, 4]), &[0.0; 2], Activation::Linear).is_err());
    }

    #[test]
    fn dense_matches_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 7);
        let w = random(&mut rng, 21);
        let b = random(&mut rng, 3);
        let y = dense_forward(&x, &Tensor::from_vec(&[3, 7], w.clone()).unwrap(), &b, Activation::Linear).unwrap();
        for u in 0..3 {
            let expected: f64 = b[u] + (0..7).map(|i| w[u * 7 + i] * x[i]).sum::<f64>();
            assert!((y[u] - expected).abs() < 1e-13);
        }
    }
}
