//! Root-cause scores propagated against the causal direction:
//! `RS(i) = S(i) + α · mean_{j ∈ children(i)} RS(j)`.

use std::collections::BTreeSet;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::format_float;
use crate::detection::DetectionReport;
use crate::error::{Error, Result};
use crate::graph::{kahn_order, Dag};

/// `S_i = 1 − M_i`.
pub fn initial_scores(m: &[f64]) -> Vec<f64> {
    m.iter().map(|v| 1.0 - v).collect()
}

/// Propagation over explicit variable-level edges `(parent, child)`.
pub fn propagate_edges(s: &[f64], edges: &[(usize, usize)], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Argument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let n = s.len();
    let unique: BTreeSet<(usize, usize)> = edges.iter().copied().filter(|(a, b)| a != b).collect();
    let edges: Vec<(usize, usize)> = unique.into_iter().collect();
    let order = kahn_order(n, &edges).ok_or(Error::Cyclic)?;
    let mut children = vec![Vec::new(); n];
    for &(a, b) in &edges {
        children[a].push(b);
    }
    let mut rs = s.to_vec();
    for &i in order.iter().rev() {
        if !children[i].is_empty() {
            let mean = children[i].iter().map(|&j| rs[j]).sum::<f64>() / children[i].len() as f64;
            rs[i] = s[i] + alpha * mean;
        }
    }
    Ok(rs)
}

/// Propagation over the graph's children at any lag. If lagged edges close a
/// cycle between variables, only the contemporaneous edges are used.
pub fn propagate(s: &[f64], dag: &Dag, alpha: f64) -> Result<Vec<f64>> {
    if s.len() != dag.n() {
        return Err(Error::Argument("score vector length differs from the graph".into()));
    }
    let all: Vec<(usize, usize)> = dag.graph().directed_edges().map(|e| (e.src, e.dst)).collect();
    match propagate_edges(s, &all, alpha) {
        Err(Error::Cyclic) => {
            warn!("lagged edges form a cycle between variables; propagating over lag-0 edges only");
            let contemporaneous: Vec<(usize, usize)> = dag
                .graph()
                .directed_edges()
                .filter(|e| e.lag == 0)
                .map(|e| (e.src, e.dst))
                .collect();
            propagate_edges(s, &contemporaneous, alpha)
        }
        other => other,
    }
}

/// Indices of the `k` largest scores, ties going to the lower index.
pub fn top_k(rs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > rs.len() {
        return Err(Error::Argument(format!("k must lie in 1..={}, got {k}", rs.len())));
    }
    let mut idx: Vec<usize> = (0..rs.len()).collect();
    idx.sort_by(|&a, &b| rs[b].total_cmp(&rs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaResult {
    pub timestep: i64,
    pub initial: Vec<f64>,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

/// Full analysis of one row of per-variable `M` values.
pub fn analyze(timestep: i64, m: &[f64], dag: &Dag, alpha: f64, k: usize) -> Result<RcaResult> {
    let initial = initial_scores(m);
    let scores = propagate(&initial, dag, alpha)?;
    let ranking = top_k(&scores, k.min(scores.len()))?;
    Ok(RcaResult {
        timestep,
        initial,
        scores,
        ranking,
    })
}

/// Detection CSV with `rc1..rck`, `rs_<name>` and `s_<name>` columns; the
/// extra cells are empty on rows without a result.
pub fn write_annotated_csv(
    writer: impl Write,
    report: &DetectionReport,
    results: &[Option<RcaResult>],
    k: usize,
) -> Result<()> {
    if results.len() != report.rows.len() {
        return Err(Error::Argument("one RCA slot per detection row is required".into()));
    }
    let names = &report.names;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["timestep", "score", "label", "argmin_variable", "warmup"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|i| format!("rc{i}")));
    header.extend(names.iter().map(|n| format!("rs_{n}")));
    header.extend(names.iter().map(|n| format!("s_{n}")));
    w.write_record(&header)?;
    for (row, res) in report.rows.iter().zip(results) {
        let mut rec = vec![
            row.timestep.to_string(),
            format_float(row.score),
            row.label.to_string(),
            names[row.argmin].clone(),
            u8::from(row.warmup).to_string(),
        ];
        match res {
            Some(r) => {
                rec.extend((0..k).map(|i| r.ranking.get(i).map(|&v| names[v].clone()).unwrap_or_default()));
                rec.extend(r.scores.iter().map(|&v| format_float(v)));
                rec.extend(r.initial.iter().map(|&v| format_float(v)));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), k + 2 * names.len())),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<rca csv>", e))?;
    Ok(())
}
