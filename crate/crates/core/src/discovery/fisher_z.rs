//! Gaussian conditional-independence test on partial correlations.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::stats::two_sided_normal_tail;

const R_CLAMP: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub conditioning_size: usize,
    pub independent: bool,
}

/// Sample correlation matrix plus sample size, shared by all tests in a search.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    n: usize,
    d: usize,
    corr: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn from_values(values: ArrayView2<'_, f64>) -> Self {
        let (n, d) = values.dim();
        let means: Vec<f64> = values.columns().into_iter().map(|c| c.sum() / n as f64).collect();
        let mut cov = vec![0.0; d * d];
        for row in values.rows() {
            for a in 0..d {
                let da = row[a] - means[a];
                for b in a..d {
                    cov[a * d + b] += da * (row[b] - means[b]);
                }
            }
        }
        let sd: Vec<f64> = (0..d).map(|a| cov[a * d + a].sqrt()).collect();
        let mut corr = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let r = if a == b {
                    1.0
                } else if sd[a] > 0.0 && sd[b] > 0.0 {
                    cov[a * d + b] / (sd[a] * sd[b])
                } else {
                    0.0
                };
                corr[a * d + b] = r;
                corr[b * d + a] = r;
            }
        }
        Self { n, d, corr }
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.corr[a * self.d + b]
    }

    /// Partial correlation of `(i, j)` given `s` from the inverted submatrix.
    pub fn partial_correlation(&self, i: usize, j: usize, s: &[usize]) -> Result<f64> {
        if s.is_empty() {
            return Ok(self.get(i, j));
        }
        // Fixed ordering keeps the result exactly symmetric in (i, j).
        let (i, j) = (i.min(j), i.max(j));
        let idx: Vec<usize> = [i, j].into_iter().chain(s.iter().copied()).collect();
        let k = idx.len();
        let mut sub = vec![0.0; k * k];
        for (r, &a) in idx.iter().enumerate() {
            for (c, &b) in idx.iter().enumerate() {
                sub[r * k + c] = self.get(a, b);
            }
        }
        let chol = Cholesky::new(&sub, k).ok_or(Error::Singular("partial correlation"))?;
        let p = chol.inverse();
        Ok(-p[1] / (p[0] * p[k + 1]).sqrt())
    }

    pub fn test(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CiTestResult> {
        if i == j || s.contains(&i) || s.contains(&j) {
            return Err(Error::Argument(
                "test variables must be distinct from the conditioning set".into(),
            ));
        }
        if self.n <= s.len() + 3 {
            return Err(Error::Argument(format!(
                "sample size {} too small for conditioning set of size {}",
                self.n,
                s.len()
            )));
        }
        let r = self.partial_correlation(i, j, s)?.clamp(-R_CLAMP, R_CLAMP);
        let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
        let statistic = ((self.n - s.len() - 3) as f64).sqrt() * z.abs();
        let p_value = two_sided_normal_tail(statistic);
        Ok(CiTestResult {
            statistic,
            p_value,
            conditioning_size: s.len(),
            independent: p_value > alpha,
        })
    }
}

/// Fisher-z test of `x_i ⟂ x_j | x_S`.
pub fn fisher_z_test(data: &TimeSeriesMatrix, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CiTestResult> {
    CorrelationMatrix::from_values(data.values()).test(i, j, s, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn matrix(cols: Vec<Vec<f64>>) -> TimeSeriesMatrix {
        TimeSeriesMatrix::from_columns(
            cols.into_iter()
                .enumerate()
                .map(|(i, c)| (format!("v{i}"), c))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_correlation_is_independent() {
        // Orthogonal centred columns.
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let res = fisher_z_test(&matrix(vec![a, b]), 0, 1, &[], 0.05).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
        assert!(res.independent);
    }

    #[test]
    fn copied_column_is_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let res = fisher_z_test(&matrix(vec![a.clone(), a]), 0, 1, &[], 0.05).unwrap();
        assert!(res.p_value < 1e-12);
        assert!(!res.independent);
    }

    #[test]
    fn symmetric_in_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..300).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let m = matrix(cols);
        let c = CorrelationMatrix::from_values(m.values());
        let a = c.test(0, 1, &[2, 3], 0.05).unwrap();
        let b = c.test(1, 0, &[2, 3], 0.05).unwrap();
        assert!((a.p_value - b.p_value).abs() <= 1e-12);
    }

    #[test]
    fn chain_screened_off() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 3000;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.8 * v + Distribution::<f64>::sample(&StandardNormal, &mut rng) * 0.5)
            .collect();
        let z: Vec<f64> = y
            .iter()
            .map(|v| 0.8 * v + Distribution::<f64>::sample(&StandardNormal, &mut rng) * 0.5)
            .collect();
        let c = CorrelationMatrix::from_values(matrix(vec![x, y, z]).values());
        assert!(!c.test(0, 2, &[], 0.05).unwrap().independent);
        assert!(c.test(0, 2, &[1], 0.01).unwrap().p_value > 0.01);
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = matrix(vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.5, 3.0]]);
        assert!(matches!(fisher_z_test(&m, 0, 1, &[2], 0.05), Err(Error::Argument(_))));
    }

    #[test]
    fn singular_conditioning_set() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 6.0, 1.0];
        let b = vec![2.0, 1.0, 3.0, 5.0, 4.0, 1.0, 2.0, 2.0];
        let m = matrix(vec![a.clone(), b, a.clone(), a]);
        let c = CorrelationMatrix::from_values(m.values());
        assert!(matches!(c.test(0, 1, &[2, 3], 0.05), Err(Error::Singular(_))));
    }
}
