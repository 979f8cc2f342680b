//! Fully connected tanh network with a linear output layer.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its weight matrix (row-major, `outputs × inputs`) followed by its bias.

use alloc::vec;
use alloc::vec::Vec;

use crate::float;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values of every layer, input included.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform hidden layers; the output layer is scaled by
    /// `output_gain` so a fresh policy starts near uniform.
    pub fn new(sizes: &[usize], output_gain: f64, rng: &mut SimRng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = float::sqrt(6.0 / (fan_in + fan_out) as f64);
            let gain = if l == last { output_gain } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                params.push(gain * limit * (2.0 * rng.uniform() - 1.0));
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    /// Rebuilds a network from a shape and a flat parameter vector.
    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && param_count(sizes) == params.len()).then(|| Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let acts = self.forward_cached(x);
        acts.layers.into_iter().last().unwrap()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Activations {
        debug_assert_eq!(x.len(), self.inputs());
        let depth = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(depth + 1);
        layers.push(x.to_vec());
        let mut offset = 0;
        for l in 0..depth {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = &layers[l];
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < depth {
                for o in &mut out {
                    *o = float::tanh(*o);
                }
            }
            layers.push(out);
            offset += n_in * n_out + n_out;
        }
        Activations { layers }
    }

    /// Adds ∂(grad_out · y)/∂θ into `grad` for the pass recorded in `acts`.
    pub fn backward(&self, acts: &Activations, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let depth = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(depth);
        let mut offset = 0;
        for l in 0..depth {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        // delta holds ∂/∂(pre-activation) of the current layer
        let mut delta = grad_out.to_vec();
        for l in (0..depth).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts.layers[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for (o, row) in w.chunks_exact(n_in).enumerate() {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (nx, wv) in next.iter_mut().zip(row) {
                        *nx += d * wv;
                    }
                }
                // tanh' = 1 − y²
                for (nx, y) in next.iter_mut().zip(&acts.layers[l]) {
                    *nx *= 1.0 - y * y;
                }
                delta = next;
            }
        }
    }
}
