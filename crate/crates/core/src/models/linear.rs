//! Ordinary least squares with intercept.

use log::warn;
use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Array1<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 10 {
            return Err(Error::Argument(format!("linear fit needs at least 10 pairs, got {n}")));
        }
        if p == 0 {
            return Err(Error::Argument("linear fit needs a nonempty context".into()));
        }
        let nf = n as f64;
        let mx = x.sum_axis(ndarray::Axis(0)) / nf;
        let my = y.sum() / nf;
        let xc = &x - &mx;
        let yc = y.mapv(|v| v - my);
        let gram = xc.t().dot(&xc);
        let rhs = xc.t().dot(&yc);
        let flat: Vec<f64> = gram.iter().copied().collect();
        let coef = match Cholesky::new(&flat, p) {
            Some(ch) => ch.solve(rhs.as_slice().expect("contiguous")),
            None => {
                warn!("rank-deficient design; refitting with ridge penalty {RIDGE}");
                let mut ridged = flat;
                for d in 0..p {
                    ridged[d * p + d] += RIDGE * nf;
                }
                Cholesky::new(&ridged, p)
                    .ok_or(Error::Singular("ridge regression"))?
                    .solve(rhs.as_slice().expect("contiguous"))
            }
        };
        let coef = Array1::from(coef);
        let intercept = my - coef.dot(&mx);
        Ok(Self { coef, intercept })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.coef) + self.intercept
    }
}
