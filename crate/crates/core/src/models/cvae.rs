//! Conditional variational autoencoder for `P[x | c]`.
//!
//! Encoder `q(z | x, c)` outputs mean and log-variance heads, decoder
//! `p(x | c, z)` outputs the mean of a unit-variance Gaussian. Training
//! minimizes the negative ELBO `½‖x − x̂‖² + KL(q ‖ N(0, I))` per example.

use log::warn;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{flatten, minibatches, Adam, Dense, Mlp, Standardizer};
use crate::config::CvaeConfig;
use crate::error::{Error, Result};

const COLLAPSE_KL: f64 = 1e-6;
const COLLAPSE_EPOCHS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cvae {
    encoder: Mlp,
    decoder: Mlp,
    latent: usize,
    c_scale: Standardizer,
    x_scale: Standardizer,
}

/// Batch loss split into its two terms, each averaged over examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub reconstruction: f64,
    pub kl: f64,
}

impl ElboTerms {
    pub fn loss(&self) -> f64 {
        self.reconstruction + self.kl
    }
}

/// `KL(N(μ, diag(e^lv)) ‖ N(0, I))` summed over latent dimensions.
pub fn gaussian_kl(mu: ArrayView1<'_, f64>, logvar: ArrayView1<'_, f64>) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

impl Cvae {
    pub fn new(context_dim: usize, cfg: &CvaeConfig, rng: &mut ChaCha8Rng) -> Self {
        let latent = cfg.latent.max(1);
        let mut enc = vec![1 + context_dim];
        enc.extend(&cfg.hidden);
        enc.push(2 * latent);
        let mut dec = vec![context_dim + latent];
        dec.extend(&cfg.hidden);
        dec.push(1);
        Self {
            encoder: Mlp::new(&enc, rng),
            decoder: Mlp::new(&dec, rng),
            latent,
            c_scale: Standardizer {
                mean: Array1::zeros(context_dim),
                scale: Array1::ones(context_dim),
            },
            x_scale: Standardizer {
                mean: Array1::zeros(1),
                scale: Array1::ones(1),
            },
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    pub fn fit(c: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>, cfg: &CvaeConfig, seed: u64) -> Result<Self> {
        let n = c.nrows();
        if n < 100 {
            return Err(Error::Argument(format!("CVAE needs at least 100 pairs, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::new(c.ncols(), cfg, &mut rng);
        model.c_scale = Standardizer::fit(c);
        let x_owned = x.to_owned();
        model.x_scale = Standardizer::fit_vector(&x_owned);
        let cs = model.c_scale.apply(c);
        let xs = model.x_scale.apply_scalar(&x_owned).insert_axis(Axis(1));

        let mut enc_opt = Adam::new(&model.encoder, cfg.learning_rate);
        let mut dec_opt = Adam::new(&model.decoder, cfg.learning_rate);
        let samples = cfg.mc_samples.max(1);
        let mut collapsed_for = 0usize;
        for epoch in 0..cfg.epochs {
            let mut recon = 0.0;
            let mut kl = 0.0;
            for batch in minibatches(n, cfg.batch_size, &mut rng) {
                let bc = cs.select(Axis(0), &batch);
                let bx = xs.select(Axis(0), &batch);
                let eps: Vec<Array2<f64>> = (0..samples)
                    .map(|_| {
                        Array2::from_shape_simple_fn((batch.len(), model.latent), || StandardNormal.sample(&mut rng))
                    })
                    .collect();
                let (terms, enc_g, dec_g) = model.elbo_grads(bx.view(), bc.view(), &eps);
                recon += terms.reconstruction * batch.len() as f64;
                kl += terms.kl * batch.len() as f64;
                enc_opt.step(&mut model.encoder, &enc_g);
                dec_opt.step(&mut model.decoder, &dec_g);
            }
            let (recon, kl) = (recon / n as f64, kl / n as f64);
            if !(recon + kl).is_finite() || !model.encoder.is_finite() || !model.decoder.is_finite() {
                return Err(Error::Divergence(format!(
                    "ELBO became non-finite at epoch {epoch}; try a lower learning rate"
                )));
            }
            collapsed_for = if kl < COLLAPSE_KL { collapsed_for + 1 } else { 0 };
            if collapsed_for == COLLAPSE_EPOCHS {
                warn!("CVAE latent collapsed (KL < {COLLAPSE_KL} for {COLLAPSE_EPOCHS} epochs)");
            }
        }
        Ok(model)
    }

    /// Negative ELBO on standardized `(x, c)` with the given noise draws
    /// (one `(B, latent)` matrix per Monte Carlo sample), plus gradients for
    /// the encoder and decoder.
    pub fn elbo_grads(
        &self,
        x: ArrayView2<'_, f64>,
        c: ArrayView2<'_, f64>,
        eps: &[Array2<f64>],
    ) -> (ElboTerms, Vec<Dense>, Vec<Dense>) {
        let b = x.nrows() as f64;
        let l = self.latent;
        let k = eps.len() as f64;
        let enc_in = concatenate![Axis(1), x, c];
        let enc_trace = self.encoder.forward_trace(enc_in.view());
        let head = enc_trace.output();
        let mu = head.slice(s![.., ..l]);
        let logvar = head.slice(s![.., l..]);
        let std = logvar.mapv(|v| (0.5 * v).exp());

        let kl: f64 = mu
            .rows()
            .into_iter()
            .zip(logvar.rows())
            .map(|(m, lv)| gaussian_kl(m, lv))
            .sum::<f64>()
            / b;
        // KL gradients.
        let mut d_mu = mu.mapv(|m| m / b);
        let mut d_logvar = logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0) / b);

        let mut recon = 0.0;
        let mut dec_grads: Option<Vec<Dense>> = None;
        let ctx_w = c.ncols();
        for e in eps {
            let z = &mu + &(&std * e);
            let dec_in = concatenate![Axis(1), c, z];
            let dec_trace = self.decoder.forward_trace(dec_in.view());
            let diff = dec_trace.output() - &x;
            recon += 0.5 * diff.mapv(|v| v * v).sum() / (b * k);
            let (g, g_in) = self.decoder.backward(&dec_trace, diff / (b * k));
            let d_z = g_in.slice(s![.., ctx_w..]);
            d_mu += &d_z;
            d_logvar += &(&d_z * e * &std * 0.5);
            dec_grads = Some(match dec_grads {
                None => g,
                Some(mut acc) => {
                    for (a, gi) in acc.iter_mut().zip(&g) {
                        a.w += &gi.w;
                        a.b += &gi.b;
                    }
                    acc
                }
            });
        }
        let d_head = concatenate![Axis(1), d_mu, d_logvar];
        let (enc_grads, _) = self.encoder.backward(&enc_trace, d_head);
        (
            ElboTerms {
                reconstruction: recon,
                kl,
            },
            enc_grads,
            dec_grads.expect("at least one Monte Carlo sample"),
        )
    }

    /// Decoder mean at `z` = encoder mean, in original units.
    pub fn reconstruct(&self, c: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let cs = self.c_scale.apply(c);
        let xs = self.x_scale.apply_scalar(&x.to_owned()).insert_axis(Axis(1));
        let head = self.encoder.forward(concatenate![Axis(1), xs, cs].view());
        let mu = head.slice(s![.., ..self.latent]);
        let out = self.decoder.forward(concatenate![Axis(1), cs, mu].view());
        self.x_scale.invert_scalar(&out.column(0).to_owned())
    }
}

/// Flattened encoder then decoder gradients, matching a parameter index over
/// `encoder.n_params() + decoder.n_params()`.
pub fn flat_elbo_grads(enc: &[Dense], dec: &[Dense]) -> Vec<f64> {
    let mut v = flatten(enc);
    v.extend(flatten(dec));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear::LinearModel;
    use rand::Rng;

    #[test]
    fn kl_of_standard_normal_is_zero() {
        let mu = Array1::zeros(5);
        let lv = Array1::zeros(5);
        assert_eq!(gaussian_kl(mu.view(), lv.view()), 0.0);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let cfg = CvaeConfig::default();
        let mut model = Cvae::new(2, &cfg, &mut rng);
        let b = 6;
        let x = Array2::from_shape_fn((b, 1), |_| rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_fn((b, 2), |_| rng.random_range(-1.0..1.0));
        let eps = vec![Array2::from_shape_simple_fn((b, cfg.latent), || {
            StandardNormal.sample(&mut rng)
        })];
        let (_, eg, dg) = model.elbo_grads(x.view(), c.view(), &eps);
        let flat = flat_elbo_grads(&eg, &dg);
        let n_enc = model.encoder().n_params();
        let total = n_enc + model.decoder().n_params();
        let h = 1e-5;
        for _ in 0..10 {
            let k = rng.random_range(0..total);
            let eval = |delta: f64, m: &mut Cvae| {
                let p = if k < n_enc {
                    m.encoder_mut().param_mut(k)
                } else {
                    m.decoder_mut().param_mut(k - n_enc)
                };
                *p += delta;
                let loss = m.elbo_grads(x.view(), c.view(), &eps).0.loss();
                let p = if k < n_enc {
                    m.encoder_mut().param_mut(k)
                } else {
                    m.decoder_mut().param_mut(k - n_enc)
                };
                *p -= delta;
                loss
            };
            let numeric = (eval(h, &mut model) - eval(-h, &mut model)) / (2.0 * h);
            let rel = (numeric - flat[k]).abs() / numeric.abs().max(flat[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: analytic {} numeric {numeric}", flat[k]);
        }
    }

    #[test]
    fn residuals_comparable_to_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let n = 5000;
        let c = Array2::from_shape_fn((n, 1), |_| rng.random_range(-2.0..2.0));
        let x = c
            .column(0)
            .mapv(|v| 0.5 * v + 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let model = Cvae::fit(c.view(), x.view(), &CvaeConfig::default(), 3).unwrap();
        let cvae_mae = (&model.reconstruct(c.view(), x.view()) - &x)
            .mapv(f64::abs)
            .mean()
            .unwrap();
        let ols = LinearModel::fit(c.view(), x.view()).unwrap();
        let ols_mae = (&ols.predict(c.view()) - &x).mapv(f64::abs).mean().unwrap();
        assert!(cvae_mae <= 2.0 * ols_mae, "cvae {cvae_mae} vs ols {ols_mae}");
    }

    #[test]
    fn too_few_pairs() {
        let c = Array2::<f64>::zeros((50, 1));
        let x = Array1::<f64>::zeros(50);
        assert!(Cvae::fit(c.view(), x.view(), &CvaeConfig::default(), 0).is_err());
    }
}
