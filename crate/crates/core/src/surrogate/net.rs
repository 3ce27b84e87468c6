//! Fully connected feature extractor for the deep kernel: tanh hidden layers
//! and a linear output layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs`×`inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNet {
    pub layers: Vec<Dense>,
}

/// Per-point activations retained for backpropagation.
pub(crate) struct ForwardCache {
    /// `acts[0]` is the input batch, `acts[k]` the output of layer `k-1`
    /// (after tanh for hidden layers).
    acts: Vec<Vec<f64>>,
    n: usize,
}

impl ForwardCache {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }
}

impl FeatureNet {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    pub fn new_seeded<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("feature net widths {widths:?} need >= 2 non-zero layers")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-bound..bound)).collect(),
                    bias: (0..w[1]).map(|_| rng.gen_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Builds a net from explicit layers, checking shapes chain together.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("feature net needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Dimension(format!("layer {i} weight/bias shapes inconsistent")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Dimension(format!("layer {i} input width does not match previous output")));
            }
        }
        Ok(Self { layers })
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub(crate) fn params_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    pub(crate) fn set_params(&mut self, params: &[f64]) {
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "patch has {} values, feature net expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.forward_batch(x, 1).output().to_vec())
    }

    /// Forward pass over `n` row-major inputs.
    pub(crate) fn forward_batch(&self, x: &[f64], n: usize) -> ForwardCache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = acts.last().expect("non-empty");
            let mut out = vec![0.0; n * layer.outputs];
            for p in 0..n {
                let dst = &mut out[p * layer.outputs..(p + 1) * layer.outputs];
                layer.forward(&input[p * layer.inputs..(p + 1) * layer.inputs], dst);
                if k != last {
                    dst.iter_mut().for_each(|v| *v = v.tanh());
                }
            }
            acts.push(out);
        }
        ForwardCache { acts, n }
    }

    /// Gradient of a scalar loss with respect to every weight and bias,
    /// given its gradient with respect to the batch outputs. Same ordering as
    /// `params_into`.
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Vec<f64> {
        let n = cache.n;
        let mut per_layer: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_vec();
        let last = self.layers.len() - 1;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let output = &cache.acts[k + 1];
            if k != last {
                // through tanh: d/dz tanh = 1 - tanh²
                for (d, a) in delta.iter_mut().zip(output) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.acts[k];
            let mut gw = vec![0.0; layer.weights.len()];
            let mut gb = vec![0.0; layer.outputs];
            let mut next = vec![0.0; n * layer.inputs];
            for p in 0..n {
                let dp = &delta[p * layer.outputs..(p + 1) * layer.outputs];
                let xp = &input[p * layer.inputs..(p + 1) * layer.inputs];
                let np = &mut next[p * layer.inputs..(p + 1) * layer.inputs];
                for (o, &d) in dp.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = o * layer.inputs;
                    for (i, &xv) in xp.iter().enumerate() {
                        gw[row + i] += d * xv;
                        np[i] += d * layer.weights[row + i];
                    }
                }
            }
            per_layer.push((gw, gb));
            delta = next;
        }
        per_layer.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in per_layer {
            flat.extend(gw);
            flat.extend(gb);
        }
        flat
    }
}
