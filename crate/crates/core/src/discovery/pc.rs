//! Order-independent ("stable") PC search.

use std::collections::{BTreeSet, HashMap};

use super::fisher_z::CorrelationMatrix;
use super::pdag::{apply_knowledge, meek_closure, Pdag};
use super::{combinations, Knowledge};
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::graph::MixedGraph;

/// PC search returning a CPDAG.
pub fn pc_search(data: &TimeSeriesMatrix, alpha: f64, max_degree: usize) -> Result<MixedGraph> {
    pc_search_with(data, alpha, max_degree, &Knowledge::none())
}

pub fn pc_search_with(
    data: &TimeSeriesMatrix,
    alpha: f64,
    max_degree: usize,
    knowledge: &Knowledge,
) -> Result<MixedGraph> {
    let d = data.n_vars();
    if d < 2 {
        return Err(Error::Argument("PC needs at least two variables".into()));
    }
    let corr = CorrelationMatrix::from_values(data.values());
    let independent = |i: usize, j: usize, s: &[usize]| -> bool {
        // Failed tests (singular or too small samples) count as dependence.
        corr.test(i, j, s, alpha).map(|r| r.independent).unwrap_or(false)
    };

    let mut adj: Vec<BTreeSet<usize>> = (0..d).map(|i| (0..d).filter(|&j| j != i).collect()).collect();
    let mut sepset: HashMap<(usize, usize), Vec<usize>> = HashMap::new();

    for depth in 0..=max_degree {
        let snapshot = adj.clone();
        let mut tested = false;
        for i in 0..d {
            for &j in &snapshot[i] {
                if !adj[i].contains(&j) {
                    continue;
                }
                let candidates: Vec<usize> = snapshot[i].iter().copied().filter(|&k| k != j).collect();
                if candidates.len() < depth {
                    continue;
                }
                tested = true;
                for s in combinations(&candidates, depth) {
                    if independent(i, j, &s) {
                        adj[i].remove(&j);
                        adj[j].remove(&i);
                        sepset.insert((i.min(j), i.max(j)), s);
                        break;
                    }
                }
            }
        }
        if !tested {
            break;
        }
    }

    let mut p = Pdag::new(d);
    for i in 0..d {
        for &j in &adj[i] {
            if i < j {
                p.add_undirected(i, j);
            }
        }
    }

    // Unshielded triples a − c − b, decided by majority over all separating
    // sets drawn from the final adjacencies.
    let mut colliders = Vec::new();
    for c in 0..d {
        let nb: Vec<usize> = adj[c].iter().copied().collect();
        for (x, &a) in nb.iter().enumerate() {
            for &b in &nb[x + 1..] {
                if adj[a].contains(&b) {
                    continue;
                }
                let mut with_c = 0usize;
                let mut total = 0usize;
                for base in [a, b] {
                    let other = if base == a { b } else { a };
                    let pool: Vec<usize> = adj[base].iter().copied().filter(|&k| k != other).collect();
                    for size in 0..=pool.len().min(max_degree) {
                        for s in combinations(&pool, size) {
                            if independent(a, b, &s) {
                                total += 1;
                                if s.contains(&c) {
                                    with_c += 1;
                                }
                            }
                        }
                    }
                }
                let is_collider = if total == 0 {
                    sepset
                        .get(&(a.min(b), a.max(b)))
                        .map(|s| !s.contains(&c))
                        .unwrap_or(false)
                } else {
                    2 * with_c < total
                };
                if is_collider {
                    colliders.push((a, c, b));
                }
            }
        }
    }
    for (a, c, b) in colliders {
        // First orientation wins on conflict.
        for x in [a, b] {
            if p.undirected(x, c) && !knowledge.forbids(x, c) {
                p.orient(x, c);
            }
        }
    }
    apply_knowledge(&mut p, knowledge);
    meek_closure(&mut p, knowledge);
    Ok(p.to_mixed(data.names()))
}
