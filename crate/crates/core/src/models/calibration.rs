//! Converts residual magnitudes into tail probabilities `M ∈ [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ln_two_sided_normal_tail, mean, std_dev};

const MIN_SIGMA: f64 = 1e-12;

/// Empirical survival of training `|residual|`, smoothed as `(count + 1)/(N + 1)`.
///
/// Past the largest training residual the survival continues as a Gaussian
/// tail `2·(1 − Φ(|e|/σ̂))`, rescaled so it starts at `1/(N + 1)` there. This
/// keeps `M` monotone and positive instead of collapsing to a constant floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCalibration {
    sorted_abs: Vec<f64>,
    mean: f64,
    sigma: f64,
}

impl ResidualCalibration {
    pub fn fit(residuals: &[f64]) -> Result<Self> {
        if residuals.len() < 10 {
            return Err(Error::Argument(format!(
                "calibration needs at least 10 residuals, got {}",
                residuals.len()
            )));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::Divergence("non-finite training residual".into()));
        }
        let mut sorted_abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        sorted_abs.sort_by(f64::total_cmp);
        Ok(Self {
            sorted_abs,
            mean: mean(residuals),
            sigma: std_dev(residuals).max(MIN_SIGMA),
        })
    }

    pub fn len(&self) -> usize {
        self.sorted_abs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_abs.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn max_residual(&self) -> f64 {
        *self.sorted_abs.last().expect("fit requires residuals")
    }

    pub fn survival(&self, residual: f64) -> f64 {
        let e = residual.abs();
        if e.is_nan() {
            return 0.0;
        }
        let n = self.sorted_abs.len();
        let r_max = self.max_residual();
        if e <= r_max {
            let below = self.sorted_abs.partition_point(|&r| r < e);
            return (n - below + 1) as f64 / (n + 1) as f64;
        }
        let ln_ratio = ln_two_sided_normal_tail(e / self.sigma) - ln_two_sided_normal_tail(r_max / self.sigma);
        (ln_ratio.min(0.0).exp() / (n + 1) as f64).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_residuals(seed: u64, n: usize, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn zero_residual_survives() {
        let c = ResidualCalibration::fit(&gaussian_residuals(1, 100, 1.0)).unwrap();
        assert_eq!(c.survival(0.0), 1.0);
    }

    #[test]
    fn median_residual_is_half() {
        let res = gaussian_residuals(2, 1001, 1.0);
        let c = ResidualCalibration::fit(&res).unwrap();
        let mut abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let med = abs[500];
        let tol = 2.0 / (abs.len() as f64).sqrt();
        assert!((c.survival(med) - 0.5).abs() <= tol);
    }

    #[test]
    fn far_tail_is_tiny() {
        let c = ResidualCalibration::fit(&gaussian_residuals(3, 500, 0.01)).unwrap();
        assert!(c.survival(10.0 * c.max_residual()) < 1e-3);
        assert!(c.survival(1e6) >= 0.0);
    }

    #[test]
    fn splice_is_continuous() {
        let c = ResidualCalibration::fit(&gaussian_residuals(4, 200, 1.0)).unwrap();
        let r = c.max_residual();
        let gap = c.survival(r) - c.survival(r * (1.0 + 1e-12));
        assert!((0.0..=1.0 / 201.0 + 1e-12).contains(&gap));
    }

    #[test]
    fn too_few_residuals() {
        assert!(ResidualCalibration::fit(&[0.1; 9]).is_err());
    }

    #[test]
    fn constant_residuals_clamp_sigma() {
        let c = ResidualCalibration::fit(&[0.0; 20]).unwrap();
        assert_eq!(c.sigma(), MIN_SIGMA);
        assert!(c.survival(1.0) < 1e-10);
    }

    proptest! {
        #[test]
        fn survival_monotone(seed in 0u64..1000, a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let c = ResidualCalibration::fit(&gaussian_residuals(seed, 50, 1.0)).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (m_lo, m_hi) = (c.survival(lo), c.survival(hi));
            prop_assert!(m_hi <= m_lo);
            prop_assert!((0.0..=1.0).contains(&m_hi));
            prop_assert_eq!(c.survival(-a), c.survival(a));
        }
    }
}
