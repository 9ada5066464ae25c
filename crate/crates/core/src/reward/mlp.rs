//! Fully connected reward network with a flat parameter vector.
//!
//! Layout of `params`: for each layer in order, the weight matrix (row-major,
//! `out × in`, so entry `o * in + i` connects input `i` to output `o`),
//! followed by that layer's bias vector (`out` entries). Hidden layers apply
//! the activation; the scalar output layer is affine.

use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::rng_from_seed;

use super::Perturbation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative, with the ReLU subgradient at 0 taken as 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpReward {
    widths: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
    mask: Vec<bool>,
    free: Vec<usize>,
}

fn layer_spans(widths: &[usize]) -> Vec<LayerSpan> {
    let mut offset = 0;
    widths
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                fan_in: w[0],
                fan_out: w[1],
                weights: offset,
                biases: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            span
        })
        .collect()
}

/// Total parameter count for widths `(d, W_1, …, W_L, 1)`, biases included.
pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpReward {
    pub fn new(
        widths: Vec<usize>,
        params: Vec<f64>,
        activation: Activation,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("output layer must have width 1".into()));
        }
        let count = param_count(&widths);
        if params.len() != count {
            return Err(Error::DimensionMismatch {
                expected: count,
                got: params.len(),
            });
        }
        if mask.len() != count {
            return Err(Error::DimensionMismatch {
                expected: count,
                got: mask.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        let free = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Ok(Self {
            widths,
            params,
            activation,
            mask,
            free,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of the attackable parameters, in layout order.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    /// Parameter range `[start, end)` holding the weights of layer `layer`
    /// (1-based: layer 1 maps the input to the first hidden layer).
    pub fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let span = layer_spans(&self.widths)[layer - 1];
        span.weights..span.biases
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: mask.len(),
            });
        }
        self.free = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        self.mask = mask;
        Ok(self)
    }

    /// The same network with `δ` added to the unmasked parameters.
    pub fn perturbed(&self, delta: &Perturbation) -> Result<Self> {
        if delta.len() != self.free.len() {
            return Err(Error::DimensionMismatch {
                expected: self.free.len(),
                got: delta.len(),
            });
        }
        let mut out = self.clone();
        for (&idx, &v) in self.free.iter().zip(delta.as_slice()) {
            out.params[idx] += v;
        }
        Ok(out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(forward_params(&self.widths, &self.params, self.activation, x))
    }

    /// Gradient of the output w.r.t. every parameter, written into `grad`
    /// (length `param_count`). Returns the network output.
    pub fn full_gradient_into(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(backprop(&self.widths, &self.params, self.activation, x, grad))
    }

    /// Gradient restricted to the attackable parameters, together with the output.
    pub fn output_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut full = vec![0.0; self.params.len()];
        let out = self.full_gradient_into(x, &mut full)?;
        Ok((out, self.free.iter().map(|&i| full[i]).collect()))
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"MLPR")?;
        out.write_all(&(self.widths.len() as u64).to_le_bytes())?;
        for &w in &self.widths {
            out.write_all(&(w as u64).to_le_bytes())?;
        }
        let act = match self.activation {
            Activation::Relu => 0u8,
            Activation::Identity => 1u8,
        };
        out.write_all(&[act])?;
        let mask: Vec<u8> = self.mask.iter().map(|&m| m as u8).collect();
        out.write_all(&mask)?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"MLPR" {
            return Err(Error::Format("not an MLP checkpoint".into()));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let layers = u64::from_le_bytes(word) as usize;
        if layers > 64 {
            return Err(Error::Format(format!("implausible layer count {layers}")));
        }
        let mut widths = Vec::with_capacity(layers);
        for _ in 0..layers {
            input.read_exact(&mut word)?;
            widths.push(u64::from_le_bytes(word) as usize);
        }
        let mut act = [0u8; 1];
        input.read_exact(&mut act)?;
        let activation = match act[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(Error::Format(format!("unknown activation tag {other}"))),
        };
        let count = param_count(&widths);
        let mut mask = vec![0u8; count];
        input.read_exact(&mut mask)?;
        let mut bytes = vec![0u8; count * 8];
        input.read_exact(&mut bytes)?;
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::new(
            widths,
            params,
            activation,
            mask.into_iter().map(|m| m != 0).collect(),
        )
    }
}

pub(crate) fn forward_params(
    widths: &[usize],
    params: &[f64],
    activation: Activation,
    x: &[f64],
) -> f64 {
    let spans = layer_spans(widths);
    let last = spans.len() - 1;
    let mut input = x.to_vec();
    for (l, s) in spans.iter().enumerate() {
        let w = &params[s.weights..s.biases];
        let b = &params[s.biases..s.biases + s.fan_out];
        let mut out: Vec<f64> = (0..s.fan_out)
            .map(|o| dot(&w[o * s.fan_in..(o + 1) * s.fan_in], &input) + b[o])
            .collect();
        if l != last {
            out.iter_mut().for_each(|z| *z = activation.apply(*z));
        }
        input = out;
    }
    input[0]
}

/// Reverse-mode gradient of the scalar output w.r.t. all parameters.
pub(crate) fn backprop(
    widths: &[usize],
    params: &[f64],
    activation: Activation,
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    let spans = layer_spans(widths);
    let last = spans.len() - 1;
    // inputs[l] feeds layer l; pre[l] holds its pre-activations
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(spans.len());
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(spans.len());
    let mut current = x.to_vec();
    for (l, s) in spans.iter().enumerate() {
        let w = &params[s.weights..s.biases];
        let b = &params[s.biases..s.biases + s.fan_out];
        let z: Vec<f64> = (0..s.fan_out)
            .map(|o| dot(&w[o * s.fan_in..(o + 1) * s.fan_in], &current) + b[o])
            .collect();
        let next = if l != last {
            z.iter().map(|&v| activation.apply(v)).collect()
        } else {
            z.clone()
        };
        inputs.push(std::mem::replace(&mut current, next));
        pre.push(z);
    }
    let output = current[0];

    let mut upstream = vec![1.0];
    for l in (0..spans.len()).rev() {
        let s = spans[l];
        let delta: Vec<f64> = if l == last {
            upstream.clone()
        } else {
            upstream
                .iter()
                .zip(&pre[l])
                .map(|(u, &z)| u * activation.derivative(z))
                .collect()
        };
        let input = &inputs[l];
        for o in 0..s.fan_out {
            let row = &mut grad[s.weights + o * s.fan_in..s.weights + (o + 1) * s.fan_in];
            let d = delta[o];
            for (g, xi) in row.iter_mut().zip(input) {
                *g = d * xi;
            }
            grad[s.biases + o] = d;
        }
        if l > 0 {
            let w = &params[s.weights..s.biases];
            let mut back = vec![0.0; s.fan_in];
            for o in 0..s.fan_out {
                if delta[o] != 0.0 {
                    crate::linalg::axpy(delta[o], &w[o * s.fan_in..(o + 1) * s.fan_in], &mut back);
                }
            }
            upstream = back;
        }
    }
    output
}

/// Gaussian weights scaled by 1/√fan-in, zero biases.
pub(crate) fn init_params(widths: &[usize], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut params = vec![0.0; param_count(widths)];
    for s in layer_spans(widths) {
        let scale = 1.0 / (s.fan_in as f64).sqrt();
        for p in &mut params[s.weights..s.biases] {
            *p = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    params
}

/// Randomly initialized ReLU network whose only attackable parameters are the
/// weights of hidden layer `attack_layer` (1-based).
pub fn random_mlp(widths: &[usize], attack_layer: usize, seed: u64) -> Result<MlpReward> {
    if widths.len() < 3 {
        return Err(Error::InvalidArgument(
            "a random reward network needs at least one hidden layer".into(),
        ));
    }
    if attack_layer == 0 || attack_layer > widths.len() - 2 {
        return Err(Error::InvalidArgument(format!(
            "attack layer {attack_layer} is not a hidden layer"
        )));
    }
    let params = init_params(widths, seed);
    let count = params.len();
    let model = MlpReward::new(widths.to_vec(), params, Activation::Relu, vec![false; count])?;
    let range = model.weight_range(attack_layer);
    let mask = (0..count).map(|i| range.contains(&i)).collect();
    model.with_mask(mask)
}
