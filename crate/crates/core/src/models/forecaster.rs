//! Windowed univariate forecaster for root variables.
//!
//! Predicts `x(t)` from `x(t − w) ..= x(t − 1)`. The network sees the window
//! relative to its last value and predicts the step `x(t) − x(t − 1)`, so
//! slow level drift between training and test does not push a tanh network
//! outside the range it was fitted on.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::mlp::MlpRegressor;
use crate::config::NetConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootForecaster {
    window: usize,
    net: MlpRegressor,
}

fn relative(window: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let w = window.ncols();
    let last = window.column(w - 1).to_owned();
    let mut rel = window.to_owned();
    for (mut row, l) in rel.rows_mut().into_iter().zip(&last) {
        row -= *l;
    }
    // The last column is identically zero after shifting; drop it.
    let rel = rel.slice_move(ndarray::s![.., ..w - 1]);
    (rel, last)
}

impl RootForecaster {
    /// `windows` rows are `x(t − w) ..= x(t − 1)`; `targets` are `x(t)`.
    pub fn fit(windows: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>, cfg: &NetConfig, seed: u64) -> Result<Self> {
        let w = windows.ncols();
        if w < 2 {
            return Err(Error::Argument("forecaster window must be at least 2".into()));
        }
        if windows.nrows() < 10 {
            return Err(Error::Argument(format!(
                "forecaster needs more than window + 10 points, got {} pairs",
                windows.nrows()
            )));
        }
        let (rel, last) = relative(windows);
        let step = &targets - &last;
        let net = MlpRegressor::fit(rel.view(), step.view(), cfg, seed)?;
        Ok(Self { window: w, net })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn predict(&self, windows: ArrayView2<'_, f64>) -> Array1<f64> {
        let (rel, last) = relative(windows);
        self.net.predict(rel.view()) + last
    }
}
