//! Isolation forest over row vectors.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn harmonic(i: usize) -> f64 {
    if i <= 64 {
        return (1..=i).map(|k| 1.0 / k as f64).sum();
    }
    let x = i as f64;
    x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
}

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        _ => 2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(x: ArrayView2<'_, f64>, rows: Vec<usize>, limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.build(x, rows, 0, limit, rng);
        tree
    }

    fn build(
        &mut self,
        x: ArrayView2<'_, f64>,
        rows: Vec<usize>,
        depth: usize,
        limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        // Features that still vary in this node.
        let spans: Vec<(usize, f64, f64)> = (0..x.ncols())
            .filter_map(|f| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(x[[r, f]]), hi.max(x[[r, f]]))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if spans.is_empty() {
            return id;
        }
        let (feature, lo, hi) = spans[rng.random_range(0..spans.len())];
        let value = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&row| x[[row, feature]] < value);
        let left = self.build(x, l, depth + 1, limit, rng);
        let right = self.build(x, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    fn path_length(&self, p: ArrayView1<'_, f64>) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    id = if p[feature] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    psi: usize,
    dim: usize,
}

impl IsolationForest {
    pub fn fit(x: ArrayView2<'_, f64>, trees: usize, max_samples: usize, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if n < 2 || trees == 0 {
            return Err(Error::Argument(
                "isolation forest needs at least 2 rows and 1 tree".into(),
            ));
        }
        let psi = max_samples.clamp(2, n);
        let limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..trees)
            .map(|_| {
                let rows = sample(&mut rng, n, psi).into_vec();
                Tree::grow(x, rows, limit, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            psi,
            dim: x.ncols(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `2^(−E[h(p)] / c(ψ))`; higher is more anomalous.
    pub fn score_one(&self, p: ArrayView1<'_, f64>) -> f64 {
        let mean_h = self.trees.iter().map(|t| t.path_length(p)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean_h / average_path_length(self.psi))
    }

    pub fn score(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.score_one(r)).collect()
    }
}
