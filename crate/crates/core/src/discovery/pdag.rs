//! Dense PDAG used inside the searches, Meek-rule closure, CPDAG construction
//! and Dor–Tarsi extension.

use log::warn;

use super::Knowledge;
use crate::error::{Error, Result};
use crate::graph::{kahn_order, Dag, MixedGraph};

/// Endpoint matrix over lag-0 edges: `a → b` is `mark(a, b) && !mark(b, a)`,
/// `a − b` has both marks set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Pdag {
    n: usize,
    mark: Vec<bool>,
}

impl Pdag {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            mark: vec![false; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn m(&self, a: usize, b: usize) -> bool {
        self.mark[a * self.n + b]
    }

    #[inline]
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.m(a, b) || self.m(b, a)
    }

    #[inline]
    pub fn directed(&self, a: usize, b: usize) -> bool {
        self.m(a, b) && !self.m(b, a)
    }

    #[inline]
    pub fn undirected(&self, a: usize, b: usize) -> bool {
        self.m(a, b) && self.m(b, a)
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) {
        self.mark[a * self.n + b] = true;
        self.mark[b * self.n + a] = true;
    }

    pub fn orient(&mut self, a: usize, b: usize) {
        self.mark[a * self.n + b] = true;
        self.mark[b * self.n + a] = false;
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        self.mark[a * self.n + b] = false;
        self.mark[b * self.n + a] = false;
    }

    pub fn degree(&self, x: usize) -> usize {
        (0..self.n).filter(|&y| y != x && self.adjacent(x, y)).count()
    }

    /// Undirected neighbours.
    pub fn neighbors(&self, x: usize) -> Vec<usize> {
        (0..self.n).filter(|&y| y != x && self.undirected(x, y)).collect()
    }

    pub fn parents(&self, x: usize) -> Vec<usize> {
        (0..self.n).filter(|&y| self.directed(y, x)).collect()
    }

    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(i, &a)| nodes[i + 1..].iter().all(|&b| self.adjacent(a, b)))
    }

    pub fn from_mixed(g: &MixedGraph) -> Self {
        let mut p = Self::new(g.n());
        for e in g.directed_edges().filter(|e| e.lag == 0) {
            p.orient(e.src, e.dst);
        }
        for (a, b) in g.undirected_edges() {
            p.add_undirected(a, b);
        }
        p
    }

    pub fn to_mixed(&self, names: &[String]) -> MixedGraph {
        let mut g = MixedGraph::new(names.to_vec());
        for a in 0..self.n {
            for b in a + 1..self.n {
                let res = if self.undirected(a, b) {
                    g.add_undirected(a, b)
                } else if self.directed(a, b) {
                    g.add_directed(a, b, 0)
                } else if self.directed(b, a) {
                    g.add_directed(b, a, 0)
                } else {
                    Ok(())
                };
                res.expect("endpoint matrix holds at most one edge per pair");
            }
        }
        g
    }

    /// Directed lag-0 edges of a fully oriented graph.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in 0..self.n {
                if self.directed(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Orients undirected edges that the knowledge allows in one direction only.
pub(crate) fn apply_knowledge(p: &mut Pdag, knowledge: &Knowledge) {
    let n = p.n();
    for a in 0..n {
        for b in a + 1..n {
            if p.undirected(a, b) {
                match (knowledge.forbids(a, b), knowledge.forbids(b, a)) {
                    (true, false) => p.orient(b, a),
                    (false, true) => p.orient(a, b),
                    _ => {}
                }
            }
        }
    }
}

/// Applies Meek rules 1–4 until no rule fires.
pub(crate) fn meek_closure(p: &mut Pdag, knowledge: &Knowledge) {
    let n = p.n();
    let can_orient = |p: &Pdag, a: usize, b: usize| p.undirected(a, b) && !knowledge.forbids(a, b);
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if a == b || !can_orient(p, a, b) {
                    continue;
                }
                let fire = rule1(p, a, b) || rule2(p, a, b) || rule3(p, a, b) || rule4(p, a, b);
                if fire {
                    p.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// `c → a − b`, `c` and `b` non-adjacent.
fn rule1(p: &Pdag, a: usize, b: usize) -> bool {
    (0..p.n()).any(|c| c != b && p.directed(c, a) && !p.adjacent(c, b))
}

/// `a → c → b` with `a − b`.
fn rule2(p: &Pdag, a: usize, b: usize) -> bool {
    (0..p.n()).any(|c| p.directed(a, c) && p.directed(c, b))
}

/// `a − c → b`, `a − d → b`, `c` and `d` non-adjacent.
fn rule3(p: &Pdag, a: usize, b: usize) -> bool {
    let cs: Vec<usize> = (0..p.n())
        .filter(|&c| c != b && p.undirected(a, c) && p.directed(c, b))
        .collect();
    cs.iter()
        .enumerate()
        .any(|(i, &c)| cs[i + 1..].iter().any(|&d| !p.adjacent(c, d)))
}

/// `c → d → b`, `a` adjacent to both `c` and `d`, `c` and `b` non-adjacent.
fn rule4(p: &Pdag, a: usize, b: usize) -> bool {
    (0..p.n()).any(|d| {
        d != a
            && p.directed(d, b)
            && p.adjacent(a, d)
            && (0..p.n()).any(|c| c != a && c != b && p.directed(c, d) && p.adjacent(a, c) && !p.adjacent(c, b))
    })
}

/// CPDAG of a DAG's Markov equivalence class (with optional background
/// knowledge): keep v-structure edges, then close under the Meek rules.
pub(crate) fn dag_to_cpdag(dag: &Pdag, knowledge: &Knowledge) -> Pdag {
    let n = dag.n();
    let mut out = Pdag::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if dag.adjacent(a, b) {
                out.add_undirected(a, b);
            }
        }
    }
    for c in 0..n {
        let pa = dag.parents(c);
        for (i, &a) in pa.iter().enumerate() {
            for &b in &pa[i + 1..] {
                if !dag.adjacent(a, b) {
                    out.orient(a, c);
                    out.orient(b, c);
                }
            }
        }
    }
    apply_knowledge(&mut out, knowledge);
    meek_closure(&mut out, knowledge);
    out
}

/// Dor–Tarsi consistent extension. Fails when no sink candidate exists.
pub(crate) fn extend(p: &Pdag) -> Result<Pdag> {
    let n = p.n();
    let mut work = p.clone();
    let mut out = p.clone();
    let mut alive = vec![true; n];
    for _ in 0..n {
        let pick = (0..n).find(|&x| {
            if !alive[x] {
                return false;
            }
            if (0..n).any(|y| alive[y] && work.directed(x, y)) {
                return false;
            }
            let adj: Vec<usize> = (0..n).filter(|&y| alive[y] && y != x && work.adjacent(x, y)).collect();
            adj.iter()
                .filter(|&&y| work.undirected(x, y))
                .all(|&y| adj.iter().all(|&z| z == y || work.adjacent(y, z)))
        });
        let Some(x) = pick else {
            return Err(Error::Extension(format!(
                "no eligible sink among {} remaining nodes",
                alive.iter().filter(|a| **a).count()
            )));
        };
        for y in 0..n {
            if alive[y] && work.undirected(x, y) {
                out.orient(y, x);
            }
        }
        for y in 0..n {
            if y != x {
                work.remove(x, y);
            }
        }
        alive[x] = false;
    }
    Ok(out)
}

/// Orients every undirected edge along a topological order of the directed
/// part, smallest index first among ties.
pub(crate) fn orient_by_order(p: &Pdag) -> Result<Pdag> {
    let order = kahn_order(p.n(), &p.directed_edges()).ok_or(Error::Cyclic)?;
    let mut pos = vec![0; p.n()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut out = p.clone();
    for a in 0..p.n() {
        for b in a + 1..p.n() {
            if p.undirected(a, b) {
                if pos[a] < pos[b] {
                    out.orient(a, b);
                } else {
                    out.orient(b, a);
                }
            }
        }
    }
    Ok(out)
}

/// Consistent extension of a mixed graph's lag-0 part; lagged edges are kept.
pub fn pdag_to_dag(g: &MixedGraph) -> Result<Dag> {
    let ext = extend(&Pdag::from_mixed(g))?;
    assemble(g, &ext)
}

/// Like [`pdag_to_dag`], but when no consistent extension exists the
/// remaining undirected edges are oriented by variable order.
pub fn pdag_to_dag_or_fallback(g: &MixedGraph) -> Result<Dag> {
    match pdag_to_dag(g) {
        Ok(dag) => Ok(dag),
        Err(Error::Extension(msg)) => {
            warn!("{msg}; orienting remaining undirected edges by variable order");
            assemble(g, &orient_by_order(&Pdag::from_mixed(g))?)
        }
        Err(e) => Err(e),
    }
}

fn assemble(g: &MixedGraph, oriented: &Pdag) -> Result<Dag> {
    let mut out = oriented.to_mixed(g.names());
    for e in g.directed_edges().filter(|e| e.lag > 0) {
        out.add_directed(e.src, e.dst, e.lag)?;
    }
    Dag::try_from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn identity_on_dag() {
        let dag = Dag::from_edges(names(4), &[(0, 1), (1, 2), (3, 2)]).unwrap();
        let out = pdag_to_dag(dag.graph()).unwrap();
        assert_eq!(out, dag);
    }

    #[test]
    fn single_undirected_edge_is_deterministic() {
        let mut g = MixedGraph::new(names(2));
        g.add_undirected(0, 1).unwrap();
        let a = pdag_to_dag(&g).unwrap();
        let b = pdag_to_dag(&g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_edges(), 1);
        // The lowest-index eligible sink absorbs the edge.
        assert!(a.has_edge(1, 0));
    }

    #[test]
    fn chain_cpdag_is_undirected_and_collider_kept() {
        let chain = Dag::from_edges(names(3), &[(0, 1), (1, 2)]).unwrap();
        let cp = dag_to_cpdag(&Pdag::from_mixed(chain.graph()), &Knowledge::none());
        assert!(cp.undirected(0, 1) && cp.undirected(1, 2));
        let collider = Dag::from_edges(names(3), &[(0, 1), (2, 1)]).unwrap();
        let cp = dag_to_cpdag(&Pdag::from_mixed(collider.graph()), &Knowledge::none());
        assert!(cp.directed(0, 1) && cp.directed(2, 1));
    }

    #[test]
    fn meek_rule1_propagates() {
        // 0 → 1 ← 2 collider plus 1 − 3: rule 1 gives 1 → 3.
        let dag = Dag::from_edges(names(4), &[(0, 1), (2, 1), (1, 3)]).unwrap();
        let cp = dag_to_cpdag(&Pdag::from_mixed(dag.graph()), &Knowledge::none());
        assert!(cp.directed(1, 3));
    }

    #[test]
    fn extension_preserves_skeleton_and_v_structures() {
        let dag = Dag::from_edges(names(6), &[(0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (3, 5)]).unwrap();
        let cp = dag_to_cpdag(&Pdag::from_mixed(dag.graph()), &Knowledge::none());
        let ext = pdag_to_dag(&cp.to_mixed(dag.names())).unwrap();
        assert_eq!(ext.graph().skeleton(), dag.graph().skeleton());
        assert_eq!(ext.v_structures(), dag.v_structures());
    }

    #[test]
    fn inextendable_falls_back() {
        // An undirected 4-cycle has no consistent extension without a new v-structure.
        let mut g = MixedGraph::new(names(4));
        for (a, b) in [(0, 1), (1, 2), (2, 3), (0, 3)] {
            g.add_undirected(a, b).unwrap();
        }
        assert!(matches!(pdag_to_dag(&g), Err(Error::Extension(_))));
        let dag = pdag_to_dag_or_fallback(&g).unwrap();
        assert_eq!(dag.n_edges(), 4);
        let expected: BTreeSet<_> = [(0, 1), (1, 2), (2, 3), (0, 3)].into_iter().collect();
        assert_eq!(dag.graph().skeleton(), expected);
    }
}
