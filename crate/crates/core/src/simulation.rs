//! Synthetic benchmark generator: random DAG, root signals, structural
//! equations, and injected measurement / intervention / effect anomalies.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::derive_seed;
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::evaluation::truth_segments;
use crate::graph::Dag;
use crate::stats::median;

const MAX_PLACEMENT_ATTEMPTS: usize = 1_000_000;
const STOP_TIME: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relationship {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyType {
    Measurement,
    Intervention,
    Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub n_vars: usize,
    pub edge_prob: f64,
    pub length: usize,
    pub relationship: Relationship,
    pub anomaly_type: AnomalyType,
    pub anomaly_fraction: f64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n_vars: 15,
            edge_prob: 0.1,
            length: 20_000,
            relationship: Relationship::Linear,
            anomaly_type: AnomalyType::Measurement,
            anomaly_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SimulationSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars < 2 {
            return Err(Error::Config("n_vars: must be at least 2".into()));
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return Err(Error::Config(format!(
                "edge_prob: must lie in (0, 1], got {}",
                self.edge_prob
            )));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 0.5) {
            return Err(Error::Config(format!(
                "anomaly_fraction: must lie in (0, 0.5), got {}",
                self.anomaly_fraction
            )));
        }
        if self.length < 100 {
            return Err(Error::Config("length: must be at least 100".into()));
        }
        Ok(())
    }
}

/// Erdős–Rényi skeleton oriented along a random permutation.
pub fn random_dag(n: usize, p: f64, rng: &mut impl Rng) -> Dag {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut rank = vec![0; n];
    for (r, &v) in perm.iter().enumerate() {
        rank[v] = r;
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                edges.push(if rank[a] < rank[b] { (a, b) } else { (b, a) });
            }
        }
    }
    let names = (0..n).map(|i| format!("x{i}")).collect();
    Dag::from_edges(names, &edges).expect("permutation orientation is acyclic")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Harmonic,
    PseudoPeriodic,
    Autoregressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RootSignal {
    /// `sin(2π f t)` plus Gaussian noise.
    Harmonic { frequency: f64, noise_std: f64 },
    /// `a(t)·sin(2π f t)` with `a(t) ~ N(1, amp_sd)` per sample.
    PseudoPeriodic { frequency: f64, amp_sd: f64 },
    /// AR(1) started from its stationary distribution.
    Autoregressive { ar_param: f64, sigma: f64 },
}

impl RootSignal {
    pub fn sample(kind: SignalKind, rng: &mut impl Rng) -> Self {
        match kind {
            SignalKind::Harmonic => Self::Harmonic {
                frequency: rng.random_range(0.1..=1.0),
                noise_std: rng.random_range(0.1..=0.3),
            },
            SignalKind::PseudoPeriodic => Self::PseudoPeriodic {
                frequency: rng.random_range(1.0..=6.0),
                amp_sd: 0.1,
            },
            SignalKind::Autoregressive => Self::Autoregressive {
                ar_param: rng.random_range(0.3..=1.0),
                sigma: rng.random_range(0.01..=0.1),
            },
        }
    }

    /// `len` samples on a regular grid from 0 to the stop time.
    pub fn generate(&self, len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let step = if len > 1 { STOP_TIME / (len - 1) as f64 } else { 0.0 };
        let time = |i: usize| i as f64 * step;
        match *self {
            Self::Harmonic { frequency, noise_std } => {
                let noise = Normal::new(0.0, noise_std).expect("valid noise std");
                (0..len)
                    .map(|i| (TAU * frequency * time(i)).sin() + noise.sample(rng))
                    .collect()
            }
            Self::PseudoPeriodic { frequency, amp_sd } => {
                let amp = Normal::new(1.0, amp_sd).expect("valid amplitude std");
                (0..len)
                    .map(|i| amp.sample(rng) * (TAU * frequency * time(i)).sin())
                    .collect()
            }
            Self::Autoregressive { ar_param, sigma } => {
                let innov = Normal::new(0.0, sigma).expect("valid innovation std");
                let stationary = sigma / (1.0 - ar_param * ar_param).max(1e-6).sqrt();
                let mut x = Normal::new(0.0, stationary).expect("valid std").sample(rng);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    out.push(x);
                    x = ar_param * x + innov.sample(rng);
                }
                out
            }
        }
    }
}

/// Parameters for `kind` drawn from their ranges, then the series.
pub fn gen_root_signal(kind: SignalKind, len: usize, seed: u64) -> (RootSignal, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal = RootSignal::sample(kind, &mut rng);
    let values = signal.generate(len, &mut rng);
    (signal, values)
}

/// Structural equations over a DAG with stored noise, so reruns are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sem {
    pub relationship: Relationship,
    /// Per child: `(parent, weight)` sorted by parent.
    pub weights: Vec<Vec<(usize, f64)>>,
    pub roots: Vec<Option<RootSignal>>,
    #[serde(skip)]
    pub root_values: Vec<Vec<f64>>,
    #[serde(skip)]
    pub noise: Array2<f64>,
}

/// One injected window `[start, start + duration)` on `variable`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub variable: usize,
    pub start: usize,
    pub duration: usize,
    pub scale: f64,
}

impl Injection {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }

    fn overlaps(&self, other: &Injection) -> bool {
        self.variable == other.variable && self.start < other.end() && other.start < self.end()
    }

    fn apply(&self, column: &mut [f64], center: f64) {
        for v in &mut column[self.start..self.end()] {
            *v = (*v - center) * self.scale + center;
        }
    }
}

impl Sem {
    /// Weights `U[0.5, 2]`, noise `U[−0.1, 0.1]`, and a signal per root.
    pub fn sample(dag: &Dag, relationship: Relationship, len: usize, rng: &mut impl Rng) -> Self {
        let n = dag.n();
        let mut weights = vec![Vec::new(); n];
        let mut roots = vec![None; n];
        let mut root_values = vec![Vec::new(); n];
        for i in 0..n {
            let mut parents: Vec<usize> = dag.parents(i).iter().map(|&(j, _)| j).collect();
            parents.sort_unstable();
            if parents.is_empty() {
                let kind = [
                    SignalKind::Harmonic,
                    SignalKind::PseudoPeriodic,
                    SignalKind::Autoregressive,
                ][rng.random_range(0..3)];
                let signal = RootSignal::sample(kind, rng);
                root_values[i] = signal.generate(len, rng);
                roots[i] = Some(signal);
            } else {
                weights[i] = parents.into_iter().map(|j| (j, rng.random_range(0.5..=2.0))).collect();
            }
        }
        let noise = Array2::from_shape_simple_fn((len, n), || rng.random_range(-0.1..=0.1));
        Self {
            relationship,
            weights,
            roots,
            root_values,
            noise,
        }
    }

    pub fn len(&self) -> usize {
        self.noise.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.nrows() == 0
    }

    /// Evaluates the equations in topological order. Injections listed in
    /// `edits` are applied to each variable right after it is computed, so
    /// they propagate to descendants.
    pub fn evaluate(&self, dag: &Dag, edits: &[Injection], centers: &[f64]) -> Array2<f64> {
        let (len, n) = self.noise.dim();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); n];
        for i in dag.topological_order() {
            let mut col = if self.roots[i].is_some() {
                self.root_values[i].clone()
            } else {
                (0..len)
                    .map(|t| {
                        let mut acc = 0.0;
                        for &(j, w) in &self.weights[i] {
                            let x = cols[j][t];
                            acc += w * match self.relationship {
                                Relationship::Linear => x,
                                Relationship::Nonlinear => x.tanh(),
                            };
                        }
                        acc + self.noise[[t, i]]
                    })
                    .collect()
            };
            for e in edits.iter().filter(|e| e.variable == i) {
                e.apply(&mut col, centers[i]);
            }
            cols[i] = col;
        }
        Array2::from_shape_fn((len, n), |(t, i)| cols[i][t])
    }
}

/// Maximal run of anomalous timesteps and the variables edited inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub root_causes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub spec: SimulationSpec,
    pub data: TimeSeriesMatrix,
    pub clean: TimeSeriesMatrix,
    pub dag: Dag,
    pub sem: Sem,
    pub injections: Vec<Injection>,
    pub labels: Vec<u8>,
    pub segments: Vec<Segment>,
}

impl SimulatedDataset {
    /// Root-cause variables of the segment containing each timestep.
    pub fn root_causes_per_step(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.labels.len()];
        for seg in &self.segments {
            for slot in &mut out[seg.start..seg.end] {
                slot.clone_from(&seg.root_causes);
            }
        }
        out
    }

    /// `timestep,label,root_causes` with causes joined by `;`.
    pub fn write_labels(&self, writer: impl Write) -> Result<()> {
        let names = self.data.names();
        let causes = self.root_causes_per_step();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestep", "label", "root_causes"])?;
        for (t, (&l, rc)) in self.labels.iter().zip(&causes).enumerate() {
            let joined: Vec<&str> = rc.iter().map(|&i| names[i].as_str()).collect();
            w.write_record([self.data.timestep(t).to_string(), l.to_string(), joined.join(";")])?;
        }
        w.flush().map_err(|e| Error::io("<labels csv>", e))?;
        Ok(())
    }

    /// Writes `data.csv`, `graph.txt`, `labels.csv`, `sem.json`, `spec.toml`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.data.save_csv(dir.join("data.csv"))?;
        self.dag.graph().save(dir.join("graph.txt"))?;
        let labels = dir.join("labels.csv");
        let file = std::fs::File::create(&labels).map_err(|e| Error::io(&labels, e))?;
        self.write_labels(std::io::BufWriter::new(file))?;
        let sem = serde_json::json!({ "sem": self.sem, "injections": self.injections });
        let sem_path = dir.join("sem.json");
        std::fs::write(&sem_path, serde_json::to_string_pretty(&sem)?).map_err(|e| Error::io(&sem_path, e))?;
        let spec_path = dir.join("spec.toml");
        std::fs::write(&spec_path, self.spec.to_toml_string()).map_err(|e| Error::io(&spec_path, e))?;
        Ok(())
    }
}

/// Parsed `timestep,label,root_causes` file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub timesteps: Vec<i64>,
    pub labels: Vec<u8>,
    pub root_causes: Vec<Vec<String>>,
}

impl LabelTable {
    pub fn read(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("labels file lacks a `{name}` column")))
        };
        let (ct, cl) = (col("timestep")?, col("label")?);
        let cr = headers.iter().position(|h| h == "root_causes");
        let mut out = Self {
            timesteps: Vec::new(),
            labels: Vec::new(),
            root_causes: Vec::new(),
        };
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |column: usize, what: &str| Error::Parse {
                row: r + 2,
                column: column + 1,
                message: format!("'{}' is not {what}", rec.get(column).unwrap_or("")),
            };
            out.timesteps.push(
                rec.get(ct)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| parse_err(ct, "an integer"))?,
            );
            let label: u8 = rec
                .get(cl)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(cl, "0 or 1"))?;
            if label > 1 {
                return Err(parse_err(cl, "0 or 1"));
            }
            out.labels.push(label);
            let causes = cr.and_then(|c| rec.get(c)).unwrap_or("");
            out.root_causes.push(
                causes
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            );
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Rows whose timestep is in `timesteps`, in that order.
    pub fn align(&self, timesteps: &[i64]) -> Result<Self> {
        let index: std::collections::HashMap<i64, usize> =
            self.timesteps.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut out = Self {
            timesteps: Vec::with_capacity(timesteps.len()),
            labels: Vec::with_capacity(timesteps.len()),
            root_causes: Vec::with_capacity(timesteps.len()),
        };
        for &t in timesteps {
            let &i = index
                .get(&t)
                .ok_or_else(|| Error::Schema(format!("no ground-truth label for timestep {t}")))?;
            out.timesteps.push(t);
            out.labels.push(self.labels[i]);
            out.root_causes.push(self.root_causes[i].clone());
        }
        Ok(out)
    }
}

/// Places windows until the labeled fraction is reached and applies them
/// according to the anomaly type.
pub fn inject_anomalies(
    clean: &TimeSeriesMatrix,
    dag: &Dag,
    sem: &Sem,
    kind: AnomalyType,
    fraction: f64,
    rng: &mut impl Rng,
) -> Result<(TimeSeriesMatrix, Vec<Injection>, Vec<u8>)> {
    let (len, n) = (clean.len(), clean.n_vars());
    let eligible: Vec<usize> = match kind {
        AnomalyType::Effect => dag.sinks(),
        _ => (0..n).collect(),
    };
    if eligible.is_empty() {
        return Err(Error::Generation(
            "no variable without children for effect anomalies".into(),
        ));
    }
    if len < 20 {
        return Err(Error::Generation("series too short for anomaly windows".into()));
    }
    let centers: Vec<f64> = (0..n).map(|i| median(&clean.column(i).to_vec())).collect();
    let target = (fraction * len as f64).round() as usize;
    let mut labels = vec![0u8; len];
    let mut labeled = 0usize;
    let mut injections: Vec<Injection> = Vec::new();
    let mut attempts = 0usize;
    while labeled < target {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::Generation(format!(
                "could not place anomaly windows for fraction {fraction}"
            )));
        }
        let variable = eligible[rng.random_range(0..eligible.len())];
        let duration = rng.random_range(5..=20usize);
        let start = rng.random_range(0..=len - duration);
        let scale = rng.random_range(0.0..=3.0);
        let inj = Injection {
            variable,
            start,
            duration,
            scale,
        };
        if injections.iter().any(|o| o.overlaps(&inj)) {
            continue;
        }
        for l in &mut labels[start..start + duration] {
            if *l == 0 {
                *l = 1;
                labeled += 1;
            }
        }
        injections.push(inj);
    }

    let values = match kind {
        AnomalyType::Intervention => sem.evaluate(dag, &injections, &centers),
        AnomalyType::Measurement | AnomalyType::Effect => {
            let mut v = clean.values().to_owned();
            for inj in &injections {
                let mut col: Vec<f64> = v.column(inj.variable).to_vec();
                inj.apply(&mut col, centers[inj.variable]);
                v.column_mut(inj.variable).assign(&ndarray::Array1::from(col));
            }
            v
        }
    };
    let data = TimeSeriesMatrix::with_start(values, clean.names().to_vec(), clean.start_index())?;
    Ok((data, injections, labels))
}

fn segments_of(labels: &[u8], injections: &[Injection]) -> Vec<Segment> {
    truth_segments(labels)
        .into_iter()
        .map(|(start, end)| {
            let causes: BTreeSet<usize> = injections
                .iter()
                .filter(|i| i.start < end && start < i.end())
                .map(|i| i.variable)
                .collect();
            Segment {
                start,
                end,
                root_causes: causes.into_iter().collect(),
            }
        })
        .collect()
}

/// Full generation from a spec; every random stream is derived from its seed.
pub fn simulate(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    spec.validate()?;
    let mut graph_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "simulation:graph"));
    let dag = random_dag(spec.n_vars, spec.edge_prob, &mut graph_rng);
    let mut sem_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "simulation:sem"));
    let sem = Sem::sample(&dag, spec.relationship, spec.length, &mut sem_rng);
    let clean_values = sem.evaluate(&dag, &[], &[]);
    let clean = TimeSeriesMatrix::new(clean_values, dag.names().to_vec())?;
    let mut anomaly_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "simulation:anomalies"));
    let (data, injections, labels) = inject_anomalies(
        &clean,
        &dag,
        &sem,
        spec.anomaly_type,
        spec.anomaly_fraction,
        &mut anomaly_rng,
    )?;
    let segments = segments_of(&labels, &injections);
    Ok(SimulatedDataset {
        spec: spec.clone(),
        data,
        clean,
        dag,
        sem,
        injections,
        labels,
        segments,
    })
}

/// Three-variable example `x → y → z` with `y = 0.5x + ε₁`,
/// `z = tanh(y² − y) + ε₂`, and a break of the `x → y` mechanism on
/// `[anomaly_at, anomaly_at + duration)`. `z` follows its normal mechanism
/// throughout, so only `p(y | x)` is violated.
#[derive(Debug, Clone)]
pub struct MechanismScenario {
    pub data: TimeSeriesMatrix,
    pub dag: Dag,
    pub labels: Vec<u8>,
    pub window: (usize, usize),
}

pub fn mechanism_scenario(
    len: usize,
    anomaly_at: usize,
    duration: usize,
    shift: f64,
    seed: u64,
) -> Result<MechanismScenario> {
    if anomaly_at + duration > len || duration == 0 {
        return Err(Error::Argument("anomaly window must fit inside the series".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid std");
    let signal = RootSignal::Harmonic {
        frequency: 0.5,
        noise_std: 0.3,
    };
    let x = signal.generate(len, &mut rng);
    let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v + noise.sample(&mut rng)).collect();
    for v in &mut y[anomaly_at..anomaly_at + duration] {
        *v += shift;
    }
    let z: Vec<f64> = y.iter().map(|v| (v * v - v).tanh() + noise.sample(&mut rng)).collect();
    let data = TimeSeriesMatrix::from_columns(vec![("x".into(), x), ("y".into(), y), ("z".into(), z)])?;
    let dag = Dag::from_edges(data.names().to_vec(), &[(0, 1), (1, 2)])?;
    let mut labels = vec![0u8; len];
    for l in &mut labels[anomaly_at..anomaly_at + duration] {
        *l = 1;
    }
    Ok(MechanismScenario {
        data,
        dag,
        labels,
        window: (anomaly_at, anomaly_at + duration),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, std_dev};

    fn small_spec(kind: AnomalyType, seed: u64) -> SimulationSpec {
        SimulationSpec {
            length: 2000,
            n_vars: 6,
            edge_prob: 0.5,
            anomaly_type: kind,
            seed,
            ..SimulationSpec::default()
        }
    }

    #[test]
    fn er_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_dag(15, 1e-9, &mut rng).n_edges(), 0);
        assert_eq!(random_dag(15, 1.0, &mut rng).n_edges(), 105);
    }

    #[test]
    fn er_mean_edge_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let counts: Vec<f64> = (0..1000)
            .map(|_| random_dag(15, 0.1, &mut rng).n_edges() as f64)
            .collect();
        assert!((mean(&counts) - 10.5).abs() < 1.0);
    }

    #[test]
    fn noiseless_harmonic_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = RootSignal::Harmonic {
            frequency: 0.25,
            noise_std: 1e-300,
        };
        let v = s.generate(20_001, &mut rng);
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ar_stationary_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = RootSignal::Autoregressive {
            ar_param: 0.3,
            sigma: 0.1,
        };
        let v = s.generate(20_000, &mut rng);
        let var = std_dev(&v).powi(2);
        let expected = 0.01 / (1.0 - 0.09);
        assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
    }

    #[test]
    fn parameter_draws_in_range() {
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match RootSignal::sample(SignalKind::Harmonic, &mut rng) {
                RootSignal::Harmonic { frequency, noise_std } => {
                    assert!((0.1..=1.0).contains(&frequency) && (0.1..=0.3).contains(&noise_std));
                }
                _ => unreachable!(),
            }
            match RootSignal::sample(SignalKind::PseudoPeriodic, &mut rng) {
                RootSignal::PseudoPeriodic { frequency, amp_sd } => {
                    assert!((1.0..=6.0).contains(&frequency) && amp_sd == 0.1);
                }
                _ => unreachable!(),
            }
            match RootSignal::sample(SignalKind::Autoregressive, &mut rng) {
                RootSignal::Autoregressive { ar_param, sigma } => {
                    assert!((0.3..=1.0).contains(&ar_param) && (0.01..=0.1).contains(&sigma));
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn identity_propagation() {
        let dag = Dag::from_edges(vec!["x".into(), "y".into()], &[(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sem = Sem::sample(&dag, Relationship::Linear, 100, &mut rng);
        sem.weights[1] = vec![(0, 1.0)];
        sem.noise.fill(0.0);
        let v = sem.evaluate(&dag, &[], &[]);
        assert_eq!(v.column(0), v.column(1));
    }

    #[test]
    fn tanh_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dag = random_dag(8, 0.5, &mut rng);
        let sem = Sem::sample(&dag, Relationship::Nonlinear, 500, &mut rng);
        let v = sem.evaluate(&dag, &[], &[]);
        for i in 0..8 {
            if sem.roots[i].is_none() {
                let bound: f64 = sem.weights[i].iter().map(|(_, w)| w.abs()).sum::<f64>() + 0.1;
                assert!(v.column(i).iter().all(|x| x.abs() <= bound));
            }
        }
    }

    #[test]
    fn deterministic_and_fraction() {
        for kind in [AnomalyType::Measurement, AnomalyType::Intervention, AnomalyType::Effect] {
            let a = simulate(&small_spec(kind, 7)).unwrap();
            let b = simulate(&small_spec(kind, 7)).unwrap();
            assert_eq!(a.data, b.data);
            assert_eq!(a.labels, b.labels);
            let frac = a.labels.iter().map(|&l| l as f64).sum::<f64>() / a.labels.len() as f64;
            assert!((frac - 0.1).abs() <= 0.01, "{kind:?}: {frac}");
            assert!(a.segments.iter().all(|s| !s.root_causes.is_empty()));
        }
    }

    #[test]
    fn scale_edge_cases() {
        let mut col: Vec<f64> = (0..30).map(f64::from).collect();
        let orig = col.clone();
        Injection {
            variable: 0,
            start: 5,
            duration: 10,
            scale: 1.0,
        }
        .apply(&mut col, 12.0);
        assert_eq!(col, orig);
        Injection {
            variable: 0,
            start: 5,
            duration: 10,
            scale: 0.0,
        }
        .apply(&mut col, 12.0);
        assert!(col[5..15].iter().all(|&v| v == 12.0));
        assert_eq!(col[15], 15.0);
    }

    #[test]
    fn intervention_reaches_descendants_only() {
        let ds = simulate(&SimulationSpec {
            anomaly_type: AnomalyType::Intervention,
            ..small_spec(AnomalyType::Intervention, 8)
        })
        .unwrap();
        let mut touched = BTreeSet::new();
        for inj in &ds.injections {
            touched.insert(inj.variable);
            touched.extend(ds.dag.descendants(inj.variable));
        }
        for i in 0..ds.data.n_vars() {
            if !touched.contains(&i) {
                assert_eq!(ds.data.column(i), ds.clean.column(i));
            }
        }
    }

    #[test]
    fn intervention_on_chain() {
        let dag = Dag::from_edges(vec!["x".into(), "y".into()], &[(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sem = Sem::sample(&dag, Relationship::Linear, 200, &mut rng);
        let clean = sem.evaluate(&dag, &[], &[]);
        let centers = [median(&clean.column(0).to_vec()), median(&clean.column(1).to_vec())];
        let edit = Injection {
            variable: 0,
            start: 50,
            duration: 10,
            scale: 2.5,
        };
        let edited = sem.evaluate(&dag, &[edit], &centers);
        for t in 50..60 {
            assert_ne!(edited[[t, 1]], clean[[t, 1]]);
        }
        assert_eq!(edited[[70, 1]], clean[[70, 1]]);
        let labels: Vec<u8> = (0..200).map(|t| u8::from((50..60).contains(&t))).collect();
        assert_eq!(segments_of(&labels, &[edit])[0].root_causes, vec![0]);
    }

    #[test]
    fn effect_needs_sinks() {
        let dag = Dag::from_edges(vec!["x".into(), "y".into()], &[(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sem = Sem::sample(&dag, Relationship::Linear, 300, &mut rng);
        let clean = TimeSeriesMatrix::new(sem.evaluate(&dag, &[], &[]), dag.names().to_vec()).unwrap();
        let (_, inj, _) = inject_anomalies(&clean, &dag, &sem, AnomalyType::Effect, 0.1, &mut rng).unwrap();
        assert!(inj.iter().all(|i| i.variable == 1));
    }

    #[test]
    fn spec_keys_checked() {
        assert_eq!(SimulationSpec::from_toml_str("").unwrap(), SimulationSpec::default());
        let err = SimulationSpec::from_toml_str("n_var = 3").unwrap_err();
        assert!(err.to_string().contains("n_var"));
        assert!(SimulationSpec::from_toml_str("anomaly_fraction = 0.6").is_err());
    }

    #[test]
    fn labels_file_round_trip() {
        let ds = simulate(&small_spec(AnomalyType::Measurement, 11)).unwrap();
        let mut buf = Vec::new();
        ds.write_labels(&mut buf).unwrap();
        let table = LabelTable::read(buf.as_slice()).unwrap();
        assert_eq!(table.labels, ds.labels);
        let causes = ds.root_causes_per_step();
        for (t, names) in table.root_causes.iter().enumerate() {
            let idx: Vec<usize> = names.iter().map(|n| ds.data.column_index(n).unwrap()).collect();
            assert_eq!(idx, causes[t]);
        }
        let sub = table.align(&[5, 3]).unwrap();
        assert_eq!(sub.timesteps, vec![5, 3]);
        assert!(table.align(&[1_000_000]).is_err());
    }
}
