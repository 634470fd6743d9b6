use super::Tensor;
use crate::error::{AaeError, Result};
use crate::scalar::Scalar;

/// GRU gate parameters. Each matrix is `(hidden, hidden + input_size)`;
/// the first `hidden` columns act on the previous state, the rest on `x_t`.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights<'a, T> {
    pub w_z: &'a Tensor<T>,
    pub b_z: &'a [T],
    pub w_r: &'a Tensor<T>,
    pub b_r: &'a [T],
    pub w_h: &'a Tensor<T>,
    pub b_h: &'a [T],
}

impl<'a, T: Scalar> GruWeights<'a, T> {
    pub fn hidden(&self) -> usize {
        self.b_z.len()
    }

    fn check(&self, input_size: usize) -> Result<()> {
        let h = self.hidden();
        for (name, w, b) in [("z", self.w_z, self.b_z), ("r", self.w_r, self.b_r), ("h", self.w_h, self.b_h)] {
            if w.shape() != [h, h + input_size] || b.len() != h {
                return Err(AaeError::shape(format!(
                    "gru gate {name} weights {:?} do not fit hidden {h}, input {input_size}",
                    w.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Gradients for every GRU parameter, same layout as [`GruWeights`].
#[derive(Clone, Debug, PartialEq)]
pub struct GruGrads<T> {
    pub w_z: Vec<T>,
    pub b_z: Vec<T>,
    pub w_r: Vec<T>,
    pub b_r: Vec<T>,
    pub w_h: Vec<T>,
    pub b_h: Vec<T>,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Clone, Debug, Default)]
pub struct GruCache<T> {
    /// Number of unmasked leading steps that were actually computed.
    pub steps: usize,
    h_prev: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    r: Vec<Vec<T>>,
    candidate: Vec<Vec<T>>,
}

/// Number of leading real steps; the mask must be 1s followed by 0s.
fn real_steps(mask: &[bool]) -> Result<usize> {
    let steps = mask.iter().take_while(|m| **m).count();
    if mask[steps..].iter().any(|m| *m) {
        return Err(AaeError::validation(
            "gru mask must be a run of 1s followed only by 0s (right padding)",
        ));
    }
    Ok(steps)
}

/// `b + W [state ; x]` for one gate.
#[inline]
fn gate_pre<T: Scalar>(w: &Tensor<T>, b: &[T], state: &[T], x: &[T]) -> Vec<T> {
    let h = state.len();
    let cols = h + x.len();
    w.data()
        .chunks_exact(cols)
        .zip(b)
        .map(|(row, bi)| {
            let acc = row[..h].iter().zip(state).fold(*bi, |a, (wv, sv)| a + *wv * *sv);
            row[h..].iter().zip(x).fold(acc, |a, (wv, xv)| a + *wv * *xv)
        })
        .collect()
}

fn input_at<T: Scalar>(seq: &Tensor<T>, t: usize) -> Vec<T> {
    (0..seq.channels()).map(|c| seq.row(c)[t]).collect()
}

/// Runs the GRU over `seq` (`input_size x T`) from a zero state and returns
/// the final hidden state. Masked steps leave the state unchanged.
pub fn gru_forward<T: Scalar>(seq: &Tensor<T>, mask: &[bool], weights: &GruWeights<'_, T>) -> Result<Vec<T>> {
    gru_forward_cached(seq, mask, weights).map(|(h, _)| h)
}

pub fn gru_forward_cached<T: Scalar>(
    seq: &Tensor<T>,
    mask: &[bool],
    weights: &GruWeights<'_, T>,
) -> Result<(Vec<T>, GruCache<T>)> {
    if mask.len() != seq.width() {
        return Err(AaeError::shape(format!(
            "gru mask length {} differs from sequence length {}",
            mask.len(),
            seq.width()
        )));
    }
    weights.check(seq.channels())?;
    let steps = real_steps(mask)?;
    let hidden = weights.hidden();
    let mut h = vec![T::zero(); hidden];
    let mut cache = GruCache {
        steps,
        h_prev: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        r: Vec::with_capacity(steps),
        candidate: Vec::with_capacity(steps),
    };
    for t in 0..steps {
        let x = input_at(seq, t);
        let z: Vec<T> = gate_pre(weights.w_z, weights.b_z, &h, &x)
            .into_iter()
            .map(T::sigmoid)
            .collect();
        let r: Vec<T> = gate_pre(weights.w_r, weights.b_r, &h, &x)
            .into_iter()
            .map(T::sigmoid)
            .collect();
        let reset: Vec<T> = r.iter().zip(&h).map(|(a, b)| *a * *b).collect();
        let cand: Vec<T> = gate_pre(weights.w_h, weights.b_h, &reset, &x)
            .into_iter()
            .map(T::tanh)
            .collect();
        let next: Vec<T> = (0..hidden)
            .map(|i| (T::one() - z[i]) * h[i] + z[i] * cand[i])
            .collect();
        cache.h_prev.push(std::mem::replace(&mut h, next));
        cache.z.push(z);
        cache.r.push(r);
        cache.candidate.push(cand);
    }
    Ok((h, cache))
}

/// Backpropagation through time from the gradient w.r.t. the final state.
/// Returns the gradient w.r.t. the input sequence and all gate parameters.
pub fn gru_backward<T: Scalar>(
    seq: &Tensor<T>,
    weights: &GruWeights<'_, T>,
    cache: &GruCache<T>,
    grad_final: &[T],
) -> Result<(Tensor<T>, GruGrads<T>)> {
    let hidden = weights.hidden();
    let input_size = seq.channels();
    if grad_final.len() != hidden {
        return Err(AaeError::shape("gru gradient does not match hidden size"));
    }
    let cols = hidden + input_size;
    let mut g = GruGrads {
        w_z: vec![T::zero(); hidden * cols],
        b_z: vec![T::zero(); hidden],
        w_r: vec![T::zero(); hidden * cols],
        b_r: vec![T::zero(); hidden],
        w_h: vec![T::zero(); hidden * cols],
        b_h: vec![T::zero(); hidden],
    };
    let mut grad_seq = Tensor::zeros(&[input_size, seq.width()]);
    let mut dh = grad_final.to_vec();
    let (wz, wr, wh) = (weights.w_z.data(), weights.w_r.data(), weights.w_h.data());

    for t in (0..cache.steps).rev() {
        let x = input_at(seq, t);
        let h_prev = &cache.h_prev[t];
        let z = &cache.z[t];
        let r = &cache.r[t];
        let cand = &cache.candidate[t];

        let mut dh_prev: Vec<T> = (0..hidden).map(|i| dh[i] * (T::one() - z[i])).collect();
        let mut dx = vec![T::zero(); input_size];

        // candidate branch: pre-activation gradient and its inputs [r*h_prev ; x]
        let dc: Vec<T> = (0..hidden)
            .map(|i| dh[i] * z[i] * (T::one() - cand[i] * cand[i]))
            .collect();
        let mut d_reset = vec![T::zero(); hidden];
        for i in 0..hidden {
            let row = &wh[i * cols..(i + 1) * cols];
            let grow = &mut g.w_h[i * cols..(i + 1) * cols];
            for j in 0..hidden {
                grow[j] += dc[i] * r[j] * h_prev[j];
                d_reset[j] += dc[i] * row[j];
            }
            for c in 0..input_size {
                grow[hidden + c] += dc[i] * x[c];
                dx[c] += dc[i] * row[hidden + c];
            }
            g.b_h[i] += dc[i];
        }
        for j in 0..hidden {
            dh_prev[j] += d_reset[j] * r[j];
        }

        let daz: Vec<T> = (0..hidden)
            .map(|i| dh[i] * (cand[i] - h_prev[i]) * z[i] * (T::one() - z[i]))
            .collect();
        let dar: Vec<T> = (0..hidden)
            .map(|i| d_reset[i] * h_prev[i] * r[i] * (T::one() - r[i]))
            .collect();
        for (w, gw, gb, da) in [(wz, &mut g.w_z, &mut g.b_z, &daz), (wr, &mut g.w_r, &mut g.b_r, &dar)] {
            for i in 0..hidden {
                let row = &w[i * cols..(i + 1) * cols];
                let grow = &mut gw[i * cols..(i + 1) * cols];
                for j in 0..hidden {
                    grow[j] += da[i] * h_prev[j];
                    dh_prev[j] += da[i] * row[j];
                }
                for c in 0..input_size {
                    grow[hidden + c] += da[i] * x[c];
                    dx[c] += da[i] * row[hidden + c];
                }
                gb[i] += da[i];
            }
        }
        let width = seq.width();
        for (c, v) in dx.into_iter().enumerate() {
            grad_seq.data_mut()[c * width + t] = v;
        }
        dh = dh_prev;
    }
    Ok((grad_seq, g))
}
