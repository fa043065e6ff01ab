//! Causal graphs over named variables: mixed (partially directed) graphs and
//! validated DAGs, plus their text serialization.
//!
//! The text format is line oriented:
//!
//! ```text
//! # comment
//! node x
//! node y
//! x -> y
//! x -> z [lag=2]
//! y -- z
//! ```
//!
//! Node lines fix the variable order. Names may contain spaces but not the
//! ` -> ` / ` -- ` separators.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub src: usize,
    pub dst: usize,
    /// 0 for a contemporaneous edge, `τ` for `src(t − τ) → dst(t)`.
    pub lag: usize,
}

/// Graph with directed and undirected edges. Undirected edges only exist at
/// lag 0 and are stored with the smaller index first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedGraph {
    names: Vec<String>,
    directed: BTreeSet<DirectedEdge>,
    undirected: BTreeSet<(usize, usize)>,
}

impl MixedGraph {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::new((0..n).map(|i| format!("x{i}")).collect())
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        if a >= self.n() || b >= self.n() {
            return Err(Error::Argument(format!("edge {a}-{b} out of range")));
        }
        Ok(())
    }

    pub fn add_directed(&mut self, src: usize, dst: usize, lag: usize) -> Result<()> {
        self.check_pair(src, dst)?;
        if src == dst {
            return Err(Error::Argument(format!("self-loop on '{}'", self.names[src])));
        }
        if lag == 0 && (self.has_directed(dst, src) || self.has_undirected(src, dst)) {
            return Err(Error::Argument(format!(
                "pair ({}, {}) already connected",
                self.names[src], self.names[dst]
            )));
        }
        self.directed.insert(DirectedEdge { src, dst, lag });
        Ok(())
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        if a == b {
            return Err(Error::Argument(format!("self-loop on '{}'", self.names[a])));
        }
        if self.has_directed(a, b) || self.has_directed(b, a) {
            return Err(Error::Argument(format!(
                "pair ({}, {}) already connected",
                self.names[a], self.names[b]
            )));
        }
        self.undirected.insert((a.min(b), a.max(b)));
        Ok(())
    }

    /// Contemporaneous `a → b`.
    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&DirectedEdge { src: a, dst: b, lag: 0 })
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&(a.min(b), a.max(b)))
    }

    /// Adjacent at lag 0, in any orientation.
    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.has_directed(a, b) || self.has_directed(b, a) || self.has_undirected(a, b)
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = DirectedEdge> + '_ {
        self.directed.iter().copied()
    }

    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    /// Variable-level adjacency matrix: entry `[a][b]` is 1 when some edge
    /// points from `a` to `b` (at any lag) or `a -- b`.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        let mut m = vec![vec![0u8; n]; n];
        for e in &self.directed {
            m[e.src][e.dst] = 1;
        }
        for &(a, b) in &self.undirected {
            m[a][b] = 1;
            m[b][a] = 1;
        }
        m
    }

    /// Unordered lag-0 adjacencies, smaller index first.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.directed
            .iter()
            .filter(|e| e.lag == 0)
            .map(|e| (e.src.min(e.dst), e.src.max(e.dst)))
            .chain(self.undirected.iter().copied())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# causal graph\n");
        for n in &self.names {
            let _ = writeln!(out, "node {n}");
        }
        for e in &self.directed {
            let (s, d) = (&self.names[e.src], &self.names[e.dst]);
            if e.lag == 0 {
                let _ = writeln!(out, "{s} -> {d}");
            } else {
                let _ = writeln!(out, "{s} -> {d} [lag={}]", e.lag);
            }
        }
        for &(a, b) in &self.undirected {
            let _ = writeln!(out, "{} -- {}", self.names[a], self.names[b]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut g = MixedGraph::new(Vec::new());
        let mut index: HashMap<String, usize> = HashMap::new();
        let fail = |line: usize, message: String| Error::GraphFormat { line, message };
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix("node ") {
                let name = name.trim().to_string();
                if name.is_empty() || index.contains_key(&name) {
                    return Err(fail(line_no, format!("bad or duplicate node '{name}'")));
                }
                index.insert(name.clone(), g.names.len());
                g.names.push(name);
                continue;
            }
            let lookup = |name: &str| {
                index
                    .get(name.trim())
                    .copied()
                    .ok_or_else(|| fail(line_no, format!("unknown node '{}'", name.trim())))
            };
            if let Some((lhs, rhs)) = line.split_once(" -> ") {
                let (rhs, lag) = match rhs.rsplit_once('[') {
                    Some((dst, attr)) => {
                        let lag = attr
                            .trim()
                            .strip_prefix("lag=")
                            .and_then(|v| v.strip_suffix(']'))
                            .and_then(|v| v.trim().parse::<usize>().ok())
                            .ok_or_else(|| fail(line_no, format!("bad attribute '[{attr}'")))?;
                        (dst, lag)
                    }
                    None => (rhs, 0),
                };
                let (s, d) = (lookup(lhs)?, lookup(rhs)?);
                g.add_directed(s, d, lag).map_err(|e| fail(line_no, e.to_string()))?;
            } else if let Some((lhs, rhs)) = line.split_once(" -- ") {
                let (a, b) = (lookup(lhs)?, lookup(rhs)?);
                g.add_undirected(a, b).map_err(|e| fail(line_no, e.to_string()))?;
            } else {
                return Err(fail(line_no, format!("unrecognized line '{line}'")));
            }
        }
        Ok(g)
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// A fully directed graph, acyclic over its lag-0 edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    graph: MixedGraph,
    parents: Vec<Vec<(usize, usize)>>,
    children: Vec<Vec<(usize, usize)>>,
}

impl TryFrom<MixedGraph> for Dag {
    type Error = Error;

    fn try_from(graph: MixedGraph) -> Result<Self> {
        if !graph.undirected.is_empty() {
            return Err(Error::Argument("DAG cannot contain undirected edges".into()));
        }
        let n = graph.n();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for e in &graph.directed {
            parents[e.dst].push((e.src, e.lag));
            children[e.src].push((e.dst, e.lag));
        }
        let dag = Self {
            graph,
            parents,
            children,
        };
        dag.topological_order_checked()?;
        Ok(dag)
    }
}

impl Dag {
    pub fn empty(names: Vec<String>) -> Self {
        Dag::try_from(MixedGraph::new(names)).expect("edgeless graph is acyclic")
    }

    /// Builds a DAG from lag-0 `(src, dst)` pairs.
    pub fn from_edges(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = MixedGraph::new(names);
        for &(s, d) in edges {
            g.add_directed(s, d, 0)?;
        }
        Dag::try_from(g)
    }

    pub fn graph(&self) -> &MixedGraph {
        &self.graph
    }

    pub fn into_graph(self) -> MixedGraph {
        self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn names(&self) -> &[String] {
        self.graph.names()
    }

    /// `(parent, lag)` pairs sorted by parent index, then lag.
    pub fn parents(&self, i: usize) -> &[(usize, usize)] {
        &self.parents[i]
    }

    /// `(child, lag)` pairs sorted by child index, then lag.
    pub fn children(&self, i: usize) -> &[(usize, usize)] {
        &self.children[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.graph.has_directed(a, b)
    }

    /// Nodes without contemporaneous parents.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.parents[i].iter().all(|&(_, lag)| lag > 0))
            .collect()
    }

    /// Nodes without any children.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.children[i].is_empty()).collect()
    }

    /// Topological order of the lag-0 edges with smallest-index tie-breaking.
    pub fn topological_order(&self) -> Vec<usize> {
        self.topological_order_checked()
            .expect("Dag invariant: lag-0 edges are acyclic")
    }

    fn topological_order_checked(&self) -> Result<Vec<usize>> {
        let n = self.n();
        let edges: Vec<(usize, usize)> = self
            .graph
            .directed
            .iter()
            .filter(|e| e.lag == 0)
            .map(|e| (e.src, e.dst))
            .collect();
        kahn_order(n, &edges).ok_or(Error::Cyclic)
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    /// `(a, c, b)` with `a → c ← b`, `a < b` and `a`, `b` non-adjacent (lag-0 only).
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        v_structures_of(&self.graph)
    }

    /// All nodes reachable from `start` along directed edges, `start` included.
    pub fn descendants(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(c, _) in &self.children[u] {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    }
}

/// Kahn's algorithm over `n` nodes; `None` if the edges contain a cycle.
pub(crate) fn kahn_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(s, d) in edges {
        indeg[d] += 1;
        out[s].push(d);
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for &v in &out[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                heap.push(Reverse(v));
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub(crate) fn v_structures_of(g: &MixedGraph) -> BTreeSet<(usize, usize, usize)> {
    let n = g.n();
    let mut pa = vec![Vec::new(); n];
    for e in g.directed_edges().filter(|e| e.lag == 0) {
        pa[e.dst].push(e.src);
    }
    let mut out = BTreeSet::new();
    for (c, ps) in pa.iter().enumerate() {
        for (x, &a) in ps.iter().enumerate() {
            for &b in &ps[x + 1..] {
                if !g.is_adjacent(a, b) {
                    out.insert((a.min(b), c, a.max(b)));
                }
            }
        }
    }
    out
}
