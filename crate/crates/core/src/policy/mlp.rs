//! Fully connected network with SiLU hidden activations and a linear output,
//! with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in × out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Pre- and post-activation values of one forward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Mlp {
    /// `dims = [input, hidden..., output]`, weights drawn from `N(0, 1/fan_in)`.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (1.0 / w[0] as f64).sqrt()).expect("positive std");
                Layer {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || normal.sample(rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: dims
                .windows(2)
                .map(|w| Layer {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.nrows()];
        dims.extend(self.layers.iter().map(|l| l.weights.ncols()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Batched forward pass; rows of `x` are examples.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights) + &layer.bias;
            if i < last {
                z.mapv_inplace(silu);
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, ForwardCache) {
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weights) + &layer.bias;
            cache.inputs.push(h);
            h = if i < last { z.mapv(silu) } else { z.clone() };
            cache.pre.push(z);
        }
        (h, cache)
    }

    /// Parameter gradients given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: Array2<f64>) -> Mlp {
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output;
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                Zip::from(&mut delta)
                    .and(&cache.pre[i])
                    .for_each(|d, &z| *d *= silu_grad(z));
            }
            let grad_w = cache.inputs[i].t().dot(&delta);
            let grad_b = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.layers[i].weights.t());
            }
            grads.push(Layer {
                weights: grad_w,
                bias: grad_b,
            });
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    /// `self -= rate * grad`.
    pub fn descend(&mut self, grad: &Mlp, rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            layer.weights.scaled_add(-rate, &g.weights);
            layer.bias.scaled_add(-rate, &g.bias);
        }
    }

    /// All parameters in layer order, weights (row-major) before bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = *it.next().expect("enough parameters");
            }
            for b in l.bias.iter_mut() {
                *b = *it.next().expect("enough parameters");
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights
                    .iter()
                    .chain(l.bias.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn dims_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::new(&[3, 5, 2], &mut rng);
        assert_eq!(m.dims(), vec![3, 5, 2]);
        assert_eq!(m.parameter_count(), 3 * 5 + 5 + 5 * 2 + 2);
        let p = m.flat_parameters();
        let x = array![[0.1, -0.2, 0.3]];
        let before = m.forward(x.view());
        m.set_flat_parameters(&p);
        assert_eq!(m.forward(x.view()), before);
    }

    #[test]
    fn cached_forward_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::new(&[4, 6, 6, 3], &mut rng);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        assert_eq!(m.forward(x.view()), m.forward_cached(x.view()).0);
    }
}
