//! Small feedforward networks with manual backpropagation and Adam.
//!
//! Arrays are `(examples, features)`. Hidden layers use tanh, the output
//! layer is linear.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::MIN_SCALE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations of every layer from a forward pass; entry 0 is the input.
pub struct Trace {
    acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace holds the input")
    }
}

impl Mlp {
    /// `sizes` lists input width, hidden widths, output width. Weights are
    /// Glorot-uniform, biases zero.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)),
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.w) + &layer.b;
            if l < last {
                a.mapv_inplace(f64::tanh);
            }
        }
        a
    }

    pub fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Trace {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.w) + &layer.b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        Trace { acts }
    }

    /// Gradients of a loss with respect to the parameters and to the input,
    /// given `grad_out` = ∂loss/∂output.
    pub fn backward(&self, trace: &Trace, grad_out: Array2<f64>) -> (Vec<Dense>, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            grads.push(Dense {
                w: input.t().dot(&delta),
                b: delta.sum_axis(Axis(0)),
            });
            let mut back = delta.dot(&layer.w.t());
            if l > 0 {
                // Input of this layer is a tanh output.
                back.zip_mut_with(input, |g, &a| *g *= 1.0 - a * a);
            }
            delta = back;
        }
        grads.reverse();
        (grads, delta)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter access in layer order, weights before biases.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if idx < layer.w.len() {
                let cols = layer.w.ncols();
                return &mut layer.w[[idx / cols, idx % cols]];
            }
            idx -= layer.w.len();
            if idx < layer.b.len() {
                return &mut layer.b[idx];
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

/// Flattens gradients in the same order as [`Mlp::param_mut`].
pub fn flatten(grads: &[Dense]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|g| g.w.iter().chain(g.b.iter()).copied())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &[Dense]) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps = self.eps * c2.sqrt();
        for ((layer, g), (m, v)) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps);
                });
        }
    }
}

/// Per-column affine standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(x.ncols());
        for row in x.rows() {
            for (j, v) in row.iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let scale = var.mapv(|v| (v / n).sqrt().max(MIN_SCALE));
        Self { mean, scale }
    }

    pub fn fit_vector(y: &Array1<f64>) -> Self {
        Self::fit(y.view().insert_axis(Axis(1)))
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }

    pub fn apply_scalar(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.mean[0]) / self.scale[0])
    }

    pub fn invert_scalar(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| v * self.scale[0] + self.mean[0])
    }
}

/// Shuffled mini-batch index sets covering `0..n` once.
pub fn minibatches(n: usize, batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
