//! Oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use causalad::config::CvaeConfig;
use causalad::discovery::{ges_search, pdag_to_dag, CorrelationMatrix};
use causalad::graph::{Dag, MixedGraph};
use causalad::models::nn::{flatten, Mlp};
use causalad::models::{flat_elbo_grads, Cvae};
use causalad::rca::propagate;
use causalad::simulation::random_dag;
use causalad::TimeSeriesMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Linear Gaussian SEM along `dag` with |weights| in [0.5, 2] and random signs.
pub fn linear_sem(dag: &Dag, n: usize, rng: &mut ChaCha8Rng) -> TimeSeriesMatrix {
    let d = dag.n();
    let mut x = Array2::<f64>::zeros((n, d));
    for v in dag.topological_order() {
        let weights: Vec<(usize, f64)> = dag
            .parents(v)
            .iter()
            .map(|&(p, _)| {
                let w: f64 = rng.random_range(0.5..2.0);
                (p, if rng.random_bool(0.5) { w } else { -w })
            })
            .collect();
        for t in 0..n {
            let e: f64 = StandardNormal.sample(rng);
            x[[t, v]] = weights.iter().map(|&(p, w)| w * x[[t, p]]).sum::<f64>() + e;
        }
    }
    TimeSeriesMatrix::new(x, dag.names().to_vec()).unwrap()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mark {
    None,
    Undirected,
    /// Points from the row index to the column index.
    Forward,
    Backward,
}

pub fn marks(g: &MixedGraph) -> Vec<Vec<Mark>> {
    let n = g.n();
    let mut m = vec![vec![Mark::None; n]; n];
    for e in g.directed_edges() {
        m[e.src][e.dst] = Mark::Forward;
        m[e.dst][e.src] = Mark::Backward;
    }
    for (a, b) in g.undirected_edges() {
        m[a][b] = Mark::Undirected;
        m[b][a] = Mark::Undirected;
    }
    m
}

/// Reference CPDAG: skeleton, v-structures, then Meek rules 1-3 to a fixed point.
pub fn cpdag_oracle(dag: &Dag) -> Vec<Vec<Mark>> {
    let n = dag.n();
    let adj = |a: usize, b: usize| dag.has_edge(a, b) || dag.has_edge(b, a);
    let mut m = vec![vec![Mark::None; n]; n];
    for a in 0..n {
        for b in 0..n {
            if adj(a, b) {
                m[a][b] = Mark::Undirected;
            }
        }
    }
    let orient = |m: &mut Vec<Vec<Mark>>, a: usize, b: usize| {
        m[a][b] = Mark::Forward;
        m[b][a] = Mark::Backward;
    };
    for c in 0..n {
        for a in 0..n {
            for b in (a + 1)..n {
                if dag.has_edge(a, c) && dag.has_edge(b, c) && !adj(a, b) {
                    orient(&mut m, a, c);
                    orient(&mut m, b, c);
                }
            }
        }
    }
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if m[a][b] != Mark::Undirected {
                    continue;
                }
                // R1: c → a − b, c and b nonadjacent.
                let r1 = (0..n).any(|c| m[c][a] == Mark::Forward && m[c][b] == Mark::None && c != b);
                // R2: a → c → b.
                let r2 = (0..n).any(|c| m[a][c] == Mark::Forward && m[c][b] == Mark::Forward);
                // R3: a − c → b, a − d → b, c and d nonadjacent.
                let r3 = (0..n).any(|c| {
                    m[a][c] == Mark::Undirected
                        && m[c][b] == Mark::Forward
                        && (0..n).any(|d| {
                            d != c && m[a][d] == Mark::Undirected && m[d][b] == Mark::Forward && m[c][d] == Mark::None
                        })
                });
                if r1 || r2 || r3 {
                    orient(&mut m, a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            return m;
        }
    }
}

pub fn shd(a: &[Vec<Mark>], b: &[Vec<Mark>]) -> usize {
    let n = a.len();
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[i][j] != b[i][j])
        .count()
}

pub fn skeleton_of_marks(m: &[Vec<Mark>]) -> BTreeSet<(usize, usize)> {
    let n = m.len();
    let mut s = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[i][j] != Mark::None {
                s.insert((i, j));
            }
        }
    }
    s
}

/// Unshielded colliders `a → c ← b` (a < b) among directed edges.
pub fn v_structures_of_marks(m: &[Vec<Mark>]) -> BTreeSet<(usize, usize, usize)> {
    let n = m.len();
    let mut v = BTreeSet::new();
    for c in 0..n {
        for a in 0..n {
            for b in (a + 1)..n {
                if m[a][c] == Mark::Forward && m[b][c] == Mark::Forward && m[a][b] == Mark::None {
                    v.insert((a, c, b));
                }
            }
        }
    }
    v
}

/// Rejection rates of the Fisher-z test on independent Gaussian columns,
/// without and with a two-variable conditioning set.
pub fn fisher_z_rejection_rates(trials: usize, n: usize, alpha: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marginal = 0usize;
    let mut conditional = 0usize;
    let mut values = Array2::<f64>::zeros((n, 4));
    for _ in 0..trials {
        values.mapv_inplace(|_| StandardNormal.sample(&mut rng));
        let corr = CorrelationMatrix::from_values(values.view());
        if !corr.test(0, 1, &[], alpha).unwrap().independent {
            marginal += 1;
        }
        if !corr.test(0, 1, &[2, 3], alpha).unwrap().independent {
            conditional += 1;
        }
    }
    (marginal as f64 / trials as f64, conditional as f64 / trials as f64)
}

/// Extends GES CPDAGs of random SEMs and checks acyclicity, skeleton,
/// v-structures and kept orientations. Returns the first violation.
pub fn check_extensions(cases: u64, seed0: u64) -> Result<(), String> {
    for seed in seed0..seed0 + cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(4..=9);
        let p = rng.random_range(0.2..0.6);
        let truth = random_dag(d, p, &mut rng);
        let data = linear_sem(&truth, 400, &mut rng);
        let cpdag = ges_search(&data, 5, 2.0).map_err(|e| format!("seed {seed}: {e}"))?;
        let dag = pdag_to_dag(&cpdag).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut pos = vec![0; d];
        for (k, &v) in dag.topological_order().iter().enumerate() {
            pos[v] = k;
        }
        if dag.graph().directed_edges().any(|e| pos[e.src] >= pos[e.dst]) {
            return Err(format!("seed {seed}: not acyclic"));
        }
        let (before, after) = (marks(&cpdag), marks(dag.graph()));
        if skeleton_of_marks(&before) != skeleton_of_marks(&after) {
            return Err(format!("seed {seed}: skeleton changed"));
        }
        if v_structures_of_marks(&before) != v_structures_of_marks(&after) {
            return Err(format!("seed {seed}: v-structures changed"));
        }
        if cpdag.directed_edges().any(|e| !dag.has_edge(e.src, e.dst)) {
            return Err(format!("seed {seed}: directed edge not kept"));
        }
    }
    Ok(())
}

/// RS(i) = S(i) + α · mean of RS over the children, by memoized recursion.
pub fn brute_rs(i: usize, s: &[f64], children: &[Vec<usize>], alpha: f64, memo: &mut HashMap<usize, f64>) -> f64 {
    if let Some(&v) = memo.get(&i) {
        return v;
    }
    let kids = &children[i];
    let v = if kids.is_empty() {
        s[i]
    } else {
        let total: f64 = kids.iter().map(|&c| brute_rs(c, s, children, alpha, memo)).sum();
        s[i] + alpha * total / kids.len() as f64
    };
    memo.insert(i, v);
    v
}

/// Random DAG with 1..=12 nodes, scores in [0, 1), α in [0, 1), and the child lists.
pub fn random_rca_case(seed: u64) -> (Dag, Vec<f64>, f64, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=12);
    let p: f64 = rng.random_range(0.0..0.7);
    let mut order: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    let mut children = vec![Vec::new(); d];
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.random_bool(p) {
                let (u, v) = (order[a], order[b]);
                edges.push((u, v));
                children[u].push(v);
            }
        }
    }
    let names = (0..d).map(|i| format!("n{i}")).collect();
    let dag = Dag::from_edges(names, &edges).unwrap();
    let s = (0..d).map(|_| rng.random::<f64>()).collect();
    let alpha = rng.random_range(0.0..1.0);
    (dag, s, alpha, children)
}

/// Largest |propagate − brute force| over `cases` random DAGs.
pub fn propagation_error(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..cases {
        let (dag, s, alpha, children) = random_rca_case(seed);
        let rs = propagate(&s, &dag, alpha).unwrap();
        let mut memo = HashMap::new();
        for (i, v) in rs.iter().enumerate() {
            worst = worst.max((v - brute_rs(i, &s, &children, alpha, &mut memo)).abs());
        }
    }
    worst
}

fn relative_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8)
}

/// Largest relative error of backprop against central differences for a
/// squared-error MLP, over `probes` random parameters.
pub fn mlp_gradient_error(probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(&[3, 10, 20, 10, 1], &mut rng);
    let x = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((8, 1), |_| rng.random_range(-1.0..1.0));
    let loss = |net: &Mlp| 0.5 * (&net.forward(x.view()) - &y).mapv(|v| v * v).sum() / 8.0;
    let trace = net.forward_trace(x.view());
    let (grads, _) = net.backward(&trace, (trace.output() - &y) / 8.0);
    let flat = flatten(&grads);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let k = rng.random_range(0..net.n_params());
        let orig = *net.param_mut(k);
        *net.param_mut(k) = orig + h;
        let up = loss(&net);
        *net.param_mut(k) = orig - h;
        let down = loss(&net);
        *net.param_mut(k) = orig;
        worst = worst.max(relative_error((up - down) / (2.0 * h), flat[k]));
    }
    worst
}

/// Same check for the negative ELBO of the CVAE with fixed noise draws.
pub fn cvae_gradient_error(probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = CvaeConfig::default();
    let mut model = Cvae::new(2, &cfg, &mut rng);
    let b = 6;
    let x = Array2::from_shape_fn((b, 1), |_| rng.random_range(-1.0..1.0));
    let c = Array2::from_shape_fn((b, 2), |_| rng.random_range(-1.0..1.0));
    let eps = vec![Array2::from_shape_simple_fn((b, cfg.latent), || {
        StandardNormal.sample(&mut rng)
    })];
    let (_, eg, dg) = model.elbo_grads(x.view(), c.view(), &eps);
    let flat = flat_elbo_grads(&eg, &dg);
    let n_enc = model.encoder().n_params();
    let total = n_enc + model.decoder().n_params();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let k = rng.random_range(0..total);
        let mut eval = |delta: f64| {
            let bump = |m: &mut Cvae, v: f64| {
                let p = if k < n_enc {
                    m.encoder_mut().param_mut(k)
                } else {
                    m.decoder_mut().param_mut(k - n_enc)
                };
                *p += v;
            };
            bump(&mut model, delta);
            let loss = model.elbo_grads(x.view(), c.view(), &eps).0.loss();
            bump(&mut model, -delta);
            loss
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max(relative_error(numeric, flat[k]));
    }
    worst
}
