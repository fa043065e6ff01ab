//! Feedforward regressor trained on squared error with Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{minibatches, Adam, Mlp, Standardizer};
use crate::config::NetConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    net: Mlp,
    x_scale: Standardizer,
    y_scale: Standardizer,
}

impl MlpRegressor {
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &NetConfig, seed: u64) -> Result<Self> {
        Self::fit_traced(x, y, cfg, seed).map(|(m, _)| m)
    }

    /// Also returns the mean training loss (standardized units) per epoch.
    pub fn fit_traced(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        cfg: &NetConfig,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        let n = x.nrows();
        if n < 10 {
            return Err(Error::Argument(format!("regressor needs at least 10 pairs, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_scale = Standardizer::fit(x);
        let y_owned = y.to_owned();
        let y_scale = Standardizer::fit_vector(&y_owned);
        let xs = x_scale.apply(x);
        let ys = y_scale.apply_scalar(&y_owned).insert_axis(Axis(1));

        let mut sizes = vec![x.ncols()];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let mut net = Mlp::new(&sizes, &mut rng);
        let mut opt = Adam::new(&net, cfg.learning_rate);
        let mut losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut total = 0.0;
            for batch in minibatches(n, cfg.batch_size, &mut rng) {
                let bx = xs.select(Axis(0), &batch);
                let by = ys.select(Axis(0), &batch);
                let trace = net.forward_trace(bx.view());
                let diff = trace.output() - &by;
                total += 0.5 * diff.mapv(|v| v * v).sum();
                let (grads, _) = net.backward(&trace, diff / batch.len() as f64);
                opt.step(&mut net, &grads);
            }
            let loss = total / n as f64;
            if !loss.is_finite() || !net.is_finite() {
                return Err(Error::Divergence(format!(
                    "regressor loss became non-finite at epoch {epoch}; try a lower learning rate"
                )));
            }
            losses.push(loss);
        }
        Ok((Self { net, x_scale, y_scale }, losses))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let out = self.net.forward(self.x_scale.apply(x).view());
        self.y_scale.invert_scalar(&out.column(0).to_owned())
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }
}

/// Half mean squared error of `net` on `(x, y)` and its parameter gradient.
pub fn squared_error_grad(net: &Mlp, x: ArrayView2<'_, f64>, y: &Array2<f64>) -> (f64, Vec<f64>) {
    let trace = net.forward_trace(x);
    let diff = trace.output() - y;
    let loss = 0.5 * diff.mapv(|v| v * v).sum() / x.nrows() as f64;
    let (grads, _) = net.backward(&trace, diff / x.nrows() as f64);
    (loss, super::nn::flatten(&grads))
}
