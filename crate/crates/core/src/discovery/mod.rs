//! Causal structure learning: PC and GES searches, consistent extension to a
//! DAG, and lag expansion for time-delayed edges.

mod bic;
mod fisher_z;
mod ges;
mod pc;
pub(crate) mod pdag;

use log::info;
use ndarray::Array2;

pub use bic::{bic_local_score, BicScore};
pub use fisher_z::{fisher_z_test, CiTestResult, CorrelationMatrix};
pub use ges::{ges_search, ges_search_with, GesPhase, GesTrace};
pub use pc::{pc_search, pc_search_with};
pub use pdag::{pdag_to_dag, pdag_to_dag_or_fallback};

use crate::config::{DiscoveryAlgorithm, DiscoveryConfig};
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::graph::{Dag, MixedGraph};

/// Temporal tiers: an edge from a later tier into an earlier one is forbidden.
/// Tier `l` holds the copies lagged by `l` steps, so tier 0 is the present.
#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    lag_of: Vec<usize>,
}

impl Knowledge {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_lags(lag_of: Vec<usize>) -> Self {
        Self { lag_of }
    }

    /// `a → b` would point from the present into the past.
    pub fn forbids(&self, a: usize, b: usize) -> bool {
        match (self.lag_of.get(a), self.lag_of.get(b)) {
            (Some(la), Some(lb)) => la < lb,
            _ => false,
        }
    }
}

/// Stacks lagged copies: column `v@l` holds `v(t − l)` for rows `t = max_lag..T`.
pub fn lag_expand(data: &TimeSeriesMatrix, max_lag: usize) -> Result<TimeSeriesMatrix> {
    if max_lag == 0 {
        return Ok(data.clone());
    }
    let t = data.len();
    if t <= max_lag {
        return Err(Error::Argument(format!(
            "series of length {t} is too short for max_lag {max_lag}"
        )));
    }
    let d = data.n_vars();
    let rows = t - max_lag;
    let v = data.values();
    let mut out = Array2::zeros((rows, d * (max_lag + 1)));
    let mut names = Vec::with_capacity(d * (max_lag + 1));
    for lag in 0..=max_lag {
        for (j, name) in data.names().iter().enumerate() {
            names.push(format!("{name}@{lag}"));
            let col = lag * d + j;
            for r in 0..rows {
                out[[r, col]] = v[[r + max_lag - lag, j]];
            }
        }
    }
    TimeSeriesMatrix::with_start(out, names, data.start_index() + max_lag as i64)
}

/// Runs the configured search and extends the resulting CPDAG to a DAG.
pub fn discover(data: &TimeSeriesMatrix, cfg: &DiscoveryConfig) -> Result<Dag> {
    if cfg.max_lag == 0 {
        let cpdag = search(data, cfg, &Knowledge::none())?;
        info!("discovered CPDAG with {} edges", cpdag.n_edges());
        return pdag_to_dag_or_fallback(&cpdag);
    }
    let expanded = lag_expand(data, cfg.max_lag)?;
    let d = data.n_vars();
    let knowledge = Knowledge::from_lags((0..expanded.n_vars()).map(|c| c / d).collect());
    let cpdag = search(&expanded, cfg, &knowledge)?;
    let full = pdag_to_dag_or_fallback(&cpdag)?;
    // Keep edges into present-time copies; `v@l → w@0` becomes `v → w` at lag `l`.
    let mut g = MixedGraph::new(data.names().to_vec());
    for e in full.graph().directed_edges() {
        if e.dst >= d {
            continue;
        }
        let (src, lag) = (e.src % d, e.src / d);
        if src == e.dst {
            continue;
        }
        g.add_directed(src, e.dst, lag)?;
    }
    info!("discovered lagged DAG with {} edges", g.n_edges());
    Dag::try_from(g)
}

fn search(data: &TimeSeriesMatrix, cfg: &DiscoveryConfig, knowledge: &Knowledge) -> Result<MixedGraph> {
    match cfg.algorithm {
        DiscoveryAlgorithm::Pc => pc_search_with(data, cfg.alpha, cfg.max_degree, knowledge),
        DiscoveryAlgorithm::Ges => {
            ges_search_with(data, cfg.max_degree, cfg.penalty_discount, knowledge).map(|(g, _)| g)
        }
    }
}

/// All `k`-element subsets of `items`, lexicographic by position.
pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        if idx[i] == i + n - k {
            return out;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Subsets of size `0..=max_size`, by size then lexicographic.
pub(crate) fn subsets(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    (0..=max_size.min(items.len()))
        .flat_map(|k| combinations(items, k))
        .collect()
}
