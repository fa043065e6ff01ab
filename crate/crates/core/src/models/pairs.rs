//! Construction of `(target, context)` training pairs from the causal graph.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub target: f64,
    pub context: Vec<f64>,
    pub timestep: i64,
}

/// Which past values of which columns condition a variable.
///
/// For a source `(j, τ_j)` the context holds `x_j(t − τ* − k + 1) ..= x_j(t − τ_j)`,
/// oldest first, where `τ*` is the largest lag in the graph and `k` the window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub sources: Vec<(usize, usize)>,
    pub max_lag: usize,
    pub window: usize,
}

impl ContextSpec {
    pub fn for_parents(dag: &Dag, i: usize, window: usize) -> Self {
        let max_lag = (0..dag.n())
            .flat_map(|v| dag.parents(v).iter().map(|&(_, lag)| lag))
            .max()
            .unwrap_or(0);
        let mut sources = dag.parents(i).to_vec();
        sources.sort_unstable();
        Self {
            sources,
            max_lag,
            window,
        }
    }

    /// Own-history context `x_i(t − w) ..= x_i(t − 1)`.
    pub fn own_history(i: usize, window: usize) -> Self {
        Self {
            sources: vec![(i, 1)],
            max_lag: 1,
            window,
        }
    }

    fn span(&self, lag: usize) -> usize {
        self.max_lag + self.window - lag
    }

    pub fn width(&self) -> usize {
        self.sources.iter().map(|&(_, lag)| self.span(lag)).sum()
    }

    /// First row index with a complete context.
    pub fn first_row(&self) -> usize {
        (self.max_lag + self.window).saturating_sub(1)
    }

    /// Context rows for targets `first..values.nrows()`.
    pub fn design(&self, values: ArrayView2<'_, f64>, first: usize) -> Array2<f64> {
        let first = first.max(self.first_row());
        let rows = values.nrows().saturating_sub(first);
        let mut out = Array2::zeros((rows, self.width()));
        let oldest = self.max_lag + self.window - 1;
        for r in 0..rows {
            let t = first + r;
            let mut c = 0;
            for &(j, lag) in &self.sources {
                for s in (t - oldest)..=(t - lag) {
                    out[[r, c]] = values[[s, j]];
                    c += 1;
                }
            }
        }
        out
    }
}

/// Matrix form of a set of training pairs.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// Row index of each target in the source matrix.
    pub rows: Vec<usize>,
}

impl TrainingSet {
    /// Pairs for `target`, dropping rows whose target is excluded by `keep`.
    pub fn build(data: &TimeSeriesMatrix, spec: &ContextSpec, target: usize, keep: Option<&[bool]>) -> Self {
        let values = data.values();
        let first = spec.first_row();
        let full = spec.design(values, first);
        let rows: Vec<usize> = (first..data.len()).filter(|&t| keep.is_none_or(|k| k[t])).collect();
        let x = if rows.len() == full.nrows() {
            full
        } else {
            let local: Vec<usize> = rows.iter().map(|&t| t - first).collect();
            full.select(ndarray::Axis(0), &local)
        };
        let y = rows.iter().map(|&t| values[[t, target]]).collect();
        Self { x, y, rows }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn to_pairs(&self, data: &TimeSeriesMatrix) -> Vec<TrainingPair> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, &t)| TrainingPair {
                target: self.y[r],
                context: self.x.row(r).to_vec(),
                timestep: data.timestep(t),
            })
            .collect()
    }
}

/// Training pairs of a non-root variable `i` with parent window `k`.
pub fn build_training_pairs(data: &TimeSeriesMatrix, dag: &Dag, i: usize, k: usize) -> Result<Vec<TrainingPair>> {
    if i >= dag.n() || dag.n() != data.n_vars() {
        return Err(Error::Argument(
            "variable index or graph size does not match the data".into(),
        ));
    }
    if dag.parents(i).is_empty() {
        return Err(Error::Argument(format!(
            "variable `{}` has no parents; use a root model",
            dag.names()[i]
        )));
    }
    if k == 0 {
        return Err(Error::Argument("window must be at least 1".into()));
    }
    let spec = ContextSpec::for_parents(dag, i, k);
    if data.len() <= spec.max_lag + k {
        return Err(Error::Argument(format!(
            "series of length {} too short for lag {} and window {k}",
            data.len(),
            spec.max_lag
        )));
    }
    Ok(TrainingSet::build(data, &spec, i, None).to_pairs(data))
}
