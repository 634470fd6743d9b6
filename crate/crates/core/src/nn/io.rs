//! Line-oriented text format for trained parameters.
//!
//! ```text
//! aae-params v1
//! architecture SCNN
//! input_len 256
//! seed 42
//! layers 8
//! layer 1 conv1d 2
//! tensor 16 1 3
//! <48 values, 17 significant digits>
//! ...
//! ```

use std::fmt::Write as _;

use super::{ClassifierParams, LayerSpec, Tensor};
use crate::error::{AaeError, Result};
use crate::scalar::Scalar;

pub const PARAMS_MAGIC: &str = "aae-params v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamsHeader {
    pub architecture: String,
    pub input_len: usize,
    pub seed: u64,
}

pub fn write_params<T: Scalar>(header: &ParamsHeader, specs: &[LayerSpec], params: &ClassifierParams<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PARAMS_MAGIC}");
    let _ = writeln!(out, "architecture {}", header.architecture);
    let _ = writeln!(out, "input_len {}", header.input_len);
    let _ = writeln!(out, "seed {}", header.seed);
    let _ = writeln!(out, "layers {}", params.layers.len());
    for (i, tensors) in params.layers.iter().enumerate() {
        let kind = specs.get(i).map_or("?", LayerSpec::kind_name);
        let _ = writeln!(out, "layer {} {kind} {}", i + 1, tensors.len());
        for t in tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(out, "tensor {}", dims.join(" "));
            let values: Vec<String> = t.data().iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
            let _ = writeln!(out, "{}", values.join(" "));
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.trim_end())
            }
            None => Err(AaeError::parse(self.last + 1, "unexpected end of parameter file")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| AaeError::parse(self.last, format!("expected '{key} ...', found '{line}'")))
    }

    fn number<N: std::str::FromStr>(&self, s: &str) -> Result<N> {
        s.trim()
            .parse()
            .map_err(|_| AaeError::parse(self.last, format!("'{s}' is not a valid number")))
    }
}

/// Parses a parameter file. Tensor shapes are taken from the file; callers
/// check them against the architecture when attaching.
pub fn read_params<T: Scalar>(text: &str) -> Result<(ParamsHeader, ClassifierParams<T>)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let magic = lines.next()?;
    if magic != PARAMS_MAGIC {
        return Err(AaeError::parse(1, format!("expected '{PARAMS_MAGIC}', found '{magic}'")));
    }
    let architecture = lines.keyed("architecture")?.to_owned();
    let input_len = {
        let v = lines.keyed("input_len")?;
        lines.number(v)?
    };
    let seed = {
        let v = lines.keyed("seed")?;
        lines.number(v)?
    };
    let n_layers: usize = {
        let v = lines.keyed("layers")?;
        lines.number(v)?
    };
    let mut layers = Vec::with_capacity(n_layers);
    for expected in 1..=n_layers {
        let head: Vec<&str> = lines.keyed("layer")?.split_whitespace().collect();
        let [idx, _kind, count] = head[..] else {
            return Err(AaeError::parse(lines.last, "layer line needs index, kind and tensor count"));
        };
        if lines.number::<usize>(idx)? != expected {
            return Err(AaeError::parse(lines.last, format!("expected layer {expected}")));
        }
        let count: usize = lines.number(count)?;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let dims = lines
                .keyed("tensor")?
                .split_whitespace()
                .map(|d| lines.number::<usize>(d))
                .collect::<Result<Vec<_>>>()?;
            let values = lines
                .next()?
                .split_whitespace()
                .map(|v| lines.number::<f64>(v).map(T::of))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor::from_vec(&dims, values).map_err(|e| AaeError::parse(lines.last, e.to_string()))?;
            tensors.push(t);
        }
        layers.push(tensors);
    }
    Ok((
        ParamsHeader {
            architecture,
            input_len,
            seed,
        },
        ClassifierParams { seed, layers },
    ))
}
