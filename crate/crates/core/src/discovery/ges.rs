//! Greedy equivalence search over CPDAGs with the BIC local score.
//!
//! Forward phase applies the best valid `Insert(x, y, T)` while it improves the
//! score; backward phase applies the best valid `Delete(x, y, H)`. After each
//! operator the state is re-canonicalized to the CPDAG of its class.

use std::collections::VecDeque;

use super::bic::BicScore;
use super::pdag::{dag_to_cpdag, extend, orient_by_order, Pdag};
use super::{subsets, Knowledge};
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::graph::MixedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GesPhase {
    Forward,
    Backward,
}

/// Total score of the state after each applied operator.
#[derive(Debug, Clone, Default)]
pub struct GesTrace {
    pub initial_score: f64,
    pub steps: Vec<(GesPhase, f64)>,
}

#[derive(Debug, Clone)]
struct Move {
    x: usize,
    y: usize,
    set: Vec<usize>,
    delta: f64,
}

pub fn ges_search(data: &TimeSeriesMatrix, max_degree: usize, penalty_discount: f64) -> Result<MixedGraph> {
    ges_search_with(data, max_degree, penalty_discount, &Knowledge::none()).map(|(g, _)| g)
}

pub fn ges_search_with(
    data: &TimeSeriesMatrix,
    max_degree: usize,
    penalty_discount: f64,
    knowledge: &Knowledge,
) -> Result<(MixedGraph, GesTrace)> {
    let d = data.n_vars();
    if d < 2 {
        return Err(Error::Argument("GES needs at least two variables".into()));
    }
    let score = BicScore::new(data.values(), penalty_discount);
    let mut state = Pdag::new(d);
    let mut trace = GesTrace {
        initial_score: total_score(&score, &state),
        steps: Vec::new(),
    };

    while let Some(m) = best_insert(&state, &score, max_degree, knowledge) {
        state.orient(m.x, m.y);
        for &t in &m.set {
            state.orient(t, m.y);
        }
        state = canonicalize(&state, knowledge);
        trace.steps.push((GesPhase::Forward, total_score(&score, &state)));
    }
    while let Some(m) = best_delete(&state, &score) {
        state.remove(m.x, m.y);
        for &h in &m.set {
            state.orient(m.y, h);
            if state.undirected(m.x, h) {
                state.orient(m.x, h);
            }
        }
        state = canonicalize(&state, knowledge);
        trace.steps.push((GesPhase::Backward, total_score(&score, &state)));
    }
    Ok((state.to_mixed(data.names()), trace))
}

fn canonicalize(p: &Pdag, knowledge: &Knowledge) -> Pdag {
    let dag = extend(p)
        .or_else(|_| orient_by_order(p))
        .expect("GES states keep an acyclic directed part");
    dag_to_cpdag(&dag, knowledge)
}

/// Score of any consistent extension of `p` (all members of a class tie).
fn total_score(score: &BicScore, p: &Pdag) -> f64 {
    let dag = extend(p).or_else(|_| orient_by_order(p)).expect("acyclic state");
    (0..p.n()).map(|i| score.local(i, &dag.parents(i))).sum()
}

fn best_insert(p: &Pdag, score: &BicScore, max_degree: usize, knowledge: &Knowledge) -> Option<Move> {
    let n = p.n();
    let mut best: Option<Move> = None;
    for y in 0..n {
        if p.degree(y) >= max_degree {
            continue;
        }
        let nb_y = p.neighbors(y);
        let pa_y = p.parents(y);
        for x in 0..n {
            if x == y || p.adjacent(x, y) || knowledge.forbids(x, y) || p.degree(x) >= max_degree {
                continue;
            }
            let (na, t0): (Vec<usize>, Vec<usize>) = nb_y.iter().partition(|&&t| p.adjacent(t, x));
            let room = max_degree.saturating_sub(na.len() + pa_y.len() + 1);
            for t in subsets(&t0, room) {
                let mut clique: Vec<usize> = na.iter().chain(&t).copied().collect();
                if !p.is_clique(&clique) {
                    continue;
                }
                if semi_directed_path_avoiding(p, y, x, &clique) {
                    continue;
                }
                clique.extend(&pa_y);
                let without = score.local(y, &clique);
                clique.push(x);
                let delta = score.local(y, &clique) - without;
                if delta > 0.0 && best.as_ref().is_none_or(|b| delta > b.delta) {
                    best = Some(Move { x, y, set: t, delta });
                }
            }
        }
    }
    best
}

fn best_delete(p: &Pdag, score: &BicScore) -> Option<Move> {
    let n = p.n();
    let mut best: Option<Move> = None;
    for y in 0..n {
        let nb_y = p.neighbors(y);
        let pa_y = p.parents(y);
        for x in 0..n {
            if x == y || !(p.directed(x, y) || p.undirected(x, y)) {
                continue;
            }
            let h0: Vec<usize> = nb_y.iter().copied().filter(|&h| h != x && p.adjacent(h, x)).collect();
            for h in subsets(&h0, h0.len()) {
                let rest: Vec<usize> = h0.iter().copied().filter(|v| !h.contains(v)).collect();
                if !p.is_clique(&rest) {
                    continue;
                }
                let mut cond: Vec<usize> = rest.iter().chain(pa_y.iter()).copied().filter(|&v| v != x).collect();
                let without = score.local(y, &cond);
                cond.push(x);
                let delta = without - score.local(y, &cond);
                if delta > 0.0 && best.as_ref().is_none_or(|b| delta > b.delta) {
                    best = Some(Move { x, y, set: h, delta });
                }
            }
        }
    }
    best
}

/// Whether a path `from ⇝ to` exists along `→` or `−` edges that avoids `blocked`.
fn semi_directed_path_avoiding(p: &Pdag, from: usize, to: usize, blocked: &[usize]) -> bool {
    let n = p.n();
    let mut seen = vec![false; n];
    for &b in blocked {
        seen[b] = true;
    }
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if seen[v] || !(p.directed(u, v) || p.undirected(u, v)) {
                continue;
            }
            if v == to {
                return true;
            }
            seen[v] = true;
            queue.push_back(v);
        }
    }
    false
}
