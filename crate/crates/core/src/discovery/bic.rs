//! Linear-Gaussian BIC local score with a penalty discount.

use std::cell::RefCell;
use std::collections::HashMap;

use ndarray::ArrayView2;

use crate::data::TimeSeriesMatrix;
use crate::linalg::Cholesky;

const MIN_VARIANCE: f64 = 1e-12;

/// Covariance-based local score `−n·ln σ̂² − c·(|P| + 1)·ln n`, memoized per
/// `(node, parent set)`.
#[derive(Debug)]
pub struct BicScore {
    n: usize,
    d: usize,
    cov: Vec<f64>,
    penalty_discount: f64,
    cache: RefCell<HashMap<(usize, Vec<usize>), f64>>,
}

impl BicScore {
    pub fn new(values: ArrayView2<'_, f64>, penalty_discount: f64) -> Self {
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
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / n as f64;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        Self {
            n,
            d,
            cov,
            penalty_discount,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.d
    }

    /// Residual variance of the OLS fit of `i` on `parents` (with intercept);
    /// `None` when the design is rank deficient.
    pub fn residual_variance(&self, i: usize, parents: &[usize]) -> Option<f64> {
        let d = self.d;
        let k = parents.len();
        if k == 0 {
            return Some(self.cov[i * d + i].max(MIN_VARIANCE));
        }
        let mut sub = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (r, &a) in parents.iter().enumerate() {
            for (c, &b) in parents.iter().enumerate() {
                sub[r * k + c] = self.cov[a * d + b];
            }
            rhs[r] = self.cov[a * d + i];
        }
        let beta = Cholesky::new(&sub, k)?.solve(&rhs);
        let explained: f64 = beta.iter().zip(&rhs).map(|(b, c)| b * c).sum();
        Some((self.cov[i * d + i] - explained).max(MIN_VARIANCE))
    }

    /// Local score; `−∞` for a rank-deficient parent set. `parents` need not be sorted.
    pub fn local(&self, i: usize, parents: &[usize]) -> f64 {
        let mut key = parents.to_vec();
        key.sort_unstable();
        if let Some(v) = self.cache.borrow().get(&(i, key.clone())) {
            return *v;
        }
        let n = self.n as f64;
        let score = match self.residual_variance(i, &key) {
            Some(var) => -n * var.ln() - self.penalty_discount * (key.len() + 1) as f64 * n.ln(),
            None => f64::NEG_INFINITY,
        };
        self.cache.borrow_mut().insert((i, key), score);
        score
    }
}

/// BIC local score of column `i` given the columns in `parents`.
pub fn bic_local_score(data: &TimeSeriesMatrix, i: usize, parents: &[usize], penalty_discount: f64) -> f64 {
    BicScore::new(data.values(), penalty_discount).local(i, parents)
}
