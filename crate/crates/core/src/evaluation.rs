//! Point-adjusted detection metrics, threshold sweep, and root-cause hit ratios.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::rca;
use crate::stats::{mean, std_dev};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!(
            "length mismatch: {a} predictions vs {b} truth labels"
        )));
    }
    Ok(())
}

/// Maximal runs of ones in `labels`, as `[start, end)`.
pub fn truth_segments(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &l) in labels.iter().enumerate() {
        match (l != 0, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, labels.len()));
    }
    runs
}

/// Marks a whole truth segment as predicted when any of its points is.
pub fn point_adjust(pred: &[u8], truth: &[u8]) -> Result<Vec<u8>> {
    same_len(pred.len(), truth.len())?;
    let mut out: Vec<u8> = pred.iter().map(|&p| u8::from(p != 0)).collect();
    for (s, e) in truth_segments(truth) {
        if out[s..e].contains(&1) {
            out[s..e].fill(1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

pub fn prf(adjusted: &[u8], truth: &[u8]) -> Result<Prf> {
    same_len(adjusted.len(), truth.len())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &t) in adjusted.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Point-adjusted metrics of `score ≥ threshold`.
pub fn prf_at(scores: &[f64], truth: &[u8], threshold: f64) -> Result<Prf> {
    let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
    prf(&point_adjust(&pred, truth)?, truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BestF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

/// Best point-adjusted F1 over every distinct score used as threshold
/// (`score ≥ λ`), lowest λ on ties.
pub fn best_f1_sweep(scores: &[f64], truth: &[u8]) -> Result<BestF1> {
    same_len(scores.len(), truth.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Argument("scores contain NaN".into()));
    }
    // A segment is credited in full once λ drops to its highest score.
    let segs = truth_segments(truth);
    let mut seg_max: Vec<(f64, usize)> = segs
        .iter()
        .map(|&(s, e)| (scores[s..e].iter().copied().fold(f64::NEG_INFINITY, f64::max), e - s))
        .collect();
    seg_max.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut negatives: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t == 0)
        .map(|(&s, _)| s)
        .collect();
    negatives.sort_by(|a, b| b.total_cmp(a));
    let positives: usize = segs.iter().map(|(s, e)| e - s).sum();

    let mut candidates = scores.to_vec();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();

    let mut best = BestF1 {
        threshold: candidates.last().copied().unwrap_or(0.0),
        ..BestF1::default()
    };
    let (mut si, mut tp, mut fp) = (0, 0, 0);
    // Descending λ; `≥` keeps the lowest threshold among equal F1 values.
    for &lambda in &candidates {
        while si < seg_max.len() && seg_max[si].0 >= lambda {
            tp += seg_max[si].1;
            si += 1;
        }
        while fp < negatives.len() && negatives[fp] >= lambda {
            fp += 1;
        }
        let m = Prf::from_counts(tp, fp, positives - tp);
        if m.f1 >= best.f1 {
            best = BestF1 {
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                threshold: lambda,
            };
        }
    }
    Ok(best)
}

/// Fraction of segments whose top-`k` list meets the truth set; `None`
/// rankings are undetected segments and count as misses.
pub fn hit_ratio_at_k(rankings: &[Option<Vec<usize>>], truth: &[Vec<usize>], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    same_len(rankings.len(), truth.len())?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let hits = rankings
        .iter()
        .zip(truth)
        .filter(|(r, t)| r.as_ref().is_some_and(|r| r.iter().take(k).any(|v| t.contains(v))))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// One ranking drawn without replacement with probability proportional to
/// `s`; uniform when every weight is zero.
pub fn rca_baseline(s: &[f64], k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if k < 1 || k > s.len() {
        return Err(Error::Argument(format!("k must lie in 1..={}, got {k}", s.len())));
    }
    if s.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Argument(
            "baseline weights must be finite and nonnegative".into(),
        ));
    }
    let mut left: Vec<usize> = (0..s.len()).collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let total: f64 = left.iter().map(|&i| s[i]).sum();
        let pos = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = left.len() - 1;
            for (p, &i) in left.iter().enumerate() {
                if s[i] > 0.0 {
                    chosen = p;
                    if u < s[i] {
                        break;
                    }
                    u -= s[i];
                }
            }
            chosen
        } else {
            rng.random_range(0..left.len())
        };
        out.push(left.remove(pos));
    }
    Ok(out)
}

/// Baseline HR@k averaged over `trials` independent draws per segment.
pub fn baseline_hit_ratio(
    initial: &[Option<Vec<f64>>],
    truth: &[Vec<usize>],
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    same_len(initial.len(), truth.len())?;
    if trials == 0 {
        return Err(Error::Argument("at least one trial is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        let mut rankings = Vec::with_capacity(initial.len());
        for s in initial {
            rankings.push(match s {
                Some(s) => Some(rca_baseline(s, k.min(s.len()), &mut rng)?),
                None => None,
            });
        }
        total += hit_ratio_at_k(&rankings, truth, k)?;
    }
    Ok(total / trials as f64)
}

/// Root-cause analysis of one ground-truth segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRca {
    pub start: usize,
    pub end: usize,
    pub detected: bool,
    /// Row with the highest anomaly score inside the segment.
    pub peak: usize,
    pub initial: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl SegmentRca {
    pub fn ranking_if_detected(&self) -> Option<Vec<usize>> {
        self.detected.then(|| self.ranking.clone())
    }

    pub fn initial_if_detected(&self) -> Option<Vec<f64>> {
        self.detected.then(|| self.initial.clone())
    }
}

/// Runs RCA at the peak row of every truth segment. `m` holds the
/// per-variable `M` values by row; `pred` are the detector's labels.
pub fn segment_rca(
    scores: &[f64],
    pred: &[u8],
    truth: &[u8],
    m: ndarray::ArrayView2<'_, f64>,
    dag: &Dag,
    alpha: f64,
) -> Result<Vec<SegmentRca>> {
    same_len(scores.len(), truth.len())?;
    same_len(pred.len(), truth.len())?;
    same_len(m.nrows(), truth.len())?;
    truth_segments(truth)
        .into_iter()
        .map(|(start, end)| {
            let mut peak = start;
            for t in start..end {
                if scores[t] > scores[peak] {
                    peak = t;
                }
            }
            let row = m.row(peak).to_vec();
            let res = rca::analyze(peak as i64, &row, dag, alpha, row.len())?;
            Ok(SegmentRca {
                start,
                end,
                detected: pred[start..end].iter().any(|&p| p != 0),
                peak,
                initial: res.initial,
                ranking: res.ranking,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRatio {
    pub k: usize,
    pub ours: f64,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fixed: Prf,
    pub best: Option<BestF1>,
    pub hit_ratios: Vec<HitRatio>,
}

impl EvalReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report is always serializable")
    }

    /// Long-format `metric,value` CSV.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "value"])?;
        let mut row = |name: String, v: f64| w.write_record([name, format!("{v:?}")]);
        row("precision".into(), self.fixed.precision)?;
        row("recall".into(), self.fixed.recall)?;
        row("f1".into(), self.fixed.f1)?;
        if let Some(b) = &self.best {
            row("best_precision".into(), b.precision)?;
            row("best_recall".into(), b.recall)?;
            row("best_f1".into(), b.f1)?;
            row("best_threshold".into(), b.threshold)?;
        }
        for h in &self.hit_ratios {
            row(format!("hr@{}", h.k), h.ours)?;
            if let Some(b) = h.baseline {
                row(format!("baseline_hr@{}", h.k), b)?;
            }
        }
        w.flush().map_err(|e| Error::io("<eval csv>", e))?;
        Ok(())
    }
}

/// Detector output read back from CSV: `timestep,score,label` plus the
/// optional `rc1..rck` and `s_<name>` columns written by the RCA step.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub timesteps: Vec<i64>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    /// Variable names from the `s_<name>` columns.
    pub names: Vec<String>,
    pub rankings: Vec<Option<Vec<String>>>,
    pub initial: Vec<Option<Vec<f64>>>,
}

impl PredictionTable {
    pub fn read(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("predictions lack a `{name}` column")))
        };
        let (ct, cs, cl) = (col("timestep")?, col("score")?, col("label")?);
        let mut rc: Vec<(usize, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(c, h)| {
                h.strip_prefix("rc")
                    .and_then(|n| n.parse::<usize>().ok())
                    .map(|n| (n, c))
            })
            .collect();
        rc.sort_unstable();
        let s_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter_map(|(c, h)| h.strip_prefix("s_").map(|n| (c, n.to_string())))
            .collect();
        let mut out = Self {
            timesteps: Vec::new(),
            scores: Vec::new(),
            labels: Vec::new(),
            names: s_cols.iter().map(|(_, n)| n.clone()).collect(),
            rankings: Vec::new(),
            initial: Vec::new(),
        };
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let cell = |c: usize| rec.get(c).unwrap_or("");
            let bad = |c: usize| Error::Parse {
                row: r + 2,
                column: c + 1,
                message: format!("'{}' is not a valid value", cell(c)),
            };
            out.timesteps.push(cell(ct).parse().map_err(|_| bad(ct))?);
            out.scores.push(cell(cs).parse().map_err(|_| bad(cs))?);
            out.labels.push(match cell(cl) {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad(cl)),
            });
            let ranking: Vec<String> = rc
                .iter()
                .map(|&(_, c)| cell(c).to_string())
                .filter(|v| !v.is_empty())
                .collect();
            out.rankings.push((!ranking.is_empty()).then_some(ranking));
            let initial = if s_cols.is_empty() || cell(s_cols[0].0).is_empty() {
                None
            } else {
                let mut v = Vec::with_capacity(s_cols.len());
                for &(c, _) in &s_cols {
                    v.push(cell(c).parse::<f64>().map_err(|_| bad(c))?);
                }
                Some(v)
            };
            out.initial.push(initial);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

fn index_of(n: &str, names: &mut Vec<String>) -> usize {
    match names.iter().position(|m| m == n) {
        Some(i) => i,
        None => {
            names.push(n.to_string());
            names.len() - 1
        }
    }
}

/// Metrics of a prediction table against aligned ground truth. Rankings are
/// taken from each truth segment's peak-score row.
pub fn evaluate_table(
    pred: &PredictionTable,
    truth: &[u8],
    truth_causes: &[Vec<String>],
    sweep: bool,
    ks: &[usize],
    baseline_trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    same_len(pred.labels.len(), truth.len())?;
    same_len(truth_causes.len(), truth.len())?;
    let fixed = prf(&point_adjust(&pred.labels, truth)?, truth)?;
    let best = if sweep {
        Some(best_f1_sweep(&pred.scores, truth)?)
    } else {
        None
    };
    let mut names: Vec<String> = pred.names.clone();
    let mut rankings = Vec::new();
    let mut initial = Vec::new();
    let mut causes = Vec::new();
    for (s, e) in truth_segments(truth) {
        let mut peak = s;
        for t in s..e {
            if pred.scores[t] > pred.scores[peak] {
                peak = t;
            }
        }
        let detected = pred.labels[s..e].contains(&1);
        let ranking = match (&pred.rankings[peak], detected) {
            (Some(r), true) => Some(r.iter().map(|n| index_of(n, &mut names)).collect()),
            _ => None,
        };
        rankings.push(ranking);
        initial.push(if detected { pred.initial[peak].clone() } else { None });
        let mut set: Vec<usize> = truth_causes[s..e]
            .iter()
            .flatten()
            .map(|n| index_of(n, &mut names))
            .collect();
        set.sort_unstable();
        set.dedup();
        causes.push(set);
    }
    let has_initial = initial.iter().any(Option::is_some);
    let mut hit_ratios = Vec::with_capacity(ks.len());
    for &k in ks {
        hit_ratios.push(HitRatio {
            k,
            ours: hit_ratio_at_k(&rankings, &causes, k)?,
            baseline: if has_initial && baseline_trials > 0 {
                Some(baseline_hit_ratio(&initial, &causes, k, baseline_trials, seed)?)
            } else {
                None
            },
        });
    }
    Ok(EvalReport {
        fixed,
        best,
        hit_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation across seeds.
pub fn mean_std(values: &[f64]) -> MeanStd {
    MeanStd {
        mean: mean(values),
        std: if values.len() > 1 { std_dev(values) } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn truth_5_10(len: usize) -> Vec<u8> {
        (0..len).map(|t| u8::from((5..=10).contains(&t))).collect()
    }

    #[test]
    fn adjust_rules() {
        let truth = truth_5_10(15);
        let mut pred = vec![0u8; 15];
        pred[7] = 1;
        pred[3] = 1;
        let adj = point_adjust(&pred, &truth).unwrap();
        assert!(adj[5..=10].iter().all(|&v| v == 1));
        assert_eq!(adj[3], 1);
        let none = point_adjust(&[0; 15], &truth).unwrap();
        let m = prf(&none, &truth).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(point_adjust(&[0; 3], &truth).is_err());
    }

    #[test]
    fn counts_arithmetic() {
        let m = Prf::from_counts(9, 1, 3);
        assert!((m.precision - 0.9).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 2.0 * 0.9 * 0.75 / 1.65).abs() < 1e-15);
        let truth = [1, 1, 0];
        assert_eq!(prf(&truth, &truth).unwrap().f1, 1.0);
    }

    #[test]
    fn sweep_separable_and_constant() {
        let truth = truth_5_10(20);
        let scores: Vec<f64> = truth.iter().map(|&t| if t == 1 { 0.9 } else { 0.1 }).collect();
        let b = best_f1_sweep(&scores, &truth).unwrap();
        assert_eq!(b.f1, 1.0);
        assert_eq!(b.threshold, 0.9);
        let flat = best_f1_sweep(&[0.5; 20], &truth).unwrap();
        assert_eq!(flat.f1, prf_at(&[0.5; 20], &truth, 0.5).unwrap().f1);
    }

    #[test]
    fn sweep_picks_lowest_tied_threshold() {
        // λ = 0.3 and λ = 0.2 both give F1 = 1 after adjustment.
        let truth = [0, 1, 1, 0];
        let scores = [0.1, 0.2, 0.3, 0.1];
        assert_eq!(best_f1_sweep(&scores, &truth).unwrap().threshold, 0.2);
    }

    #[test]
    fn hit_ratio_rules() {
        let truth = vec![vec![1]];
        assert_eq!(hit_ratio_at_k(&[Some(vec![1, 0, 2])], &truth, 1).unwrap(), 1.0);
        assert_eq!(hit_ratio_at_k(&[None], &truth, 3).unwrap(), 0.0);
        assert!(hit_ratio_at_k(&[None], &truth, 0).is_err());
        let two = [Some(vec![0, 1, 2]), None];
        assert_eq!(hit_ratio_at_k(&two, &[vec![2], vec![0]], 3).unwrap(), 0.5);
    }

    #[test]
    fn baseline_point_mass_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(rca_baseline(&[0.0, 2.0, 0.0], 1, &mut rng).unwrap(), vec![1]);
        }
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[rca_baseline(&[0.3; 4], 1, &mut rng).unwrap()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
        let mut zero = rca_baseline(&[0.0; 4], 4, &mut rng).unwrap();
        zero.sort_unstable();
        assert_eq!(zero, vec![0, 1, 2, 3]);
    }

    #[test]
    fn baseline_proportions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = [1.0, 3.0];
        let first = (0..20_000)
            .filter(|_| rca_baseline(&s, 1, &mut rng).unwrap()[0] == 1)
            .count();
        assert!((first as f64 / 20_000.0 - 0.75).abs() < 0.015);
    }

    #[test]
    fn peak_row_drives_rca() {
        let dag = Dag::from_edges(vec!["a".into(), "b".into()], &[(0, 1)]).unwrap();
        let truth = [0, 1, 1, 0];
        let scores = [0.1, 0.5, 0.99, 0.0];
        let m = ndarray::array![[0.5, 0.5], [0.2, 0.5], [0.9, 0.01], [0.5, 0.5]];
        let out = segment_rca(&scores, &[0, 0, 1, 0], &truth, m.view(), &dag, 0.5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].peak, 2);
        assert!(out[0].detected);
        assert_eq!(out[0].ranking[0], 1);
    }

    proptest! {
        #[test]
        fn adjust_never_removes(pred in proptest::collection::vec(0u8..2, 40), truth in proptest::collection::vec(0u8..2, 40)) {
            let adj = point_adjust(&pred, &truth).unwrap();
            for (p, a) in pred.iter().zip(&adj) {
                prop_assert!(a >= p);
            }
            prop_assert!(prf(&adj, &truth).unwrap().recall >= prf(&pred, &truth).unwrap().recall);
        }

        #[test]
        fn sweep_dominates_grid(scores in proptest::collection::vec(0.0f64..1.0, 60), truth in proptest::collection::vec(0u8..2, 60)) {
            let best = best_f1_sweep(&scores, &truth).unwrap();
            for g in 0..1000 {
                let f = prf_at(&scores, &truth, g as f64 / 1000.0).unwrap().f1;
                prop_assert!(best.f1 >= f - 1e-12);
            }
            let at_best = prf_at(&scores, &truth, best.threshold).unwrap();
            prop_assert!((at_best.f1 - best.f1).abs() < 1e-12);
        }

        #[test]
        fn hit_ratio_monotone_in_k(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rankings: Vec<Option<Vec<usize>>> = (0..10)
                .map(|_| {
                    let mut r: Vec<usize> = (0..6).collect();
                    rand::seq::SliceRandom::shuffle(r.as_mut_slice(), &mut rng);
                    (rng.random::<f64>() < 0.8).then_some(r)
                })
                .collect();
            let truth: Vec<Vec<usize>> = (0..10).map(|_| vec![rng.random_range(0..6)]).collect();
            let mut prev = 0.0;
            for k in 1..=6 {
                let hr = hit_ratio_at_k(&rankings, &truth, k).unwrap();
                prop_assert!(hr >= prev);
                prev = hr;
            }
            let detected = rankings.iter().filter(|r| r.is_some()).count() as f64 / 10.0;
            prop_assert!((prev - detected).abs() < 1e-12);
        }
    }
}
