//! Anomaly scores `A = 1 − min_i M_i`, thresholds, labels, and the
//! iterative retraining loop that drops suspected anomalies from training.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::TimeSeriesMatrix;
use crate::discovery::discover;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::models::{fit_models, ModelSet, ScoreMatrix};
use crate::stats::percentile;

const MIN_RETAINED_ROWS: usize = 50;

/// `(1 − min M, argmin)`, ties going to the lowest index.
pub fn anomaly_score(m: &[f64]) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &v) in m.iter().enumerate() {
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, i));
        }
    }
    best.map(|(v, i)| (1.0 - v, i))
        .ok_or_else(|| Error::Config("no per-variable scores to combine".into()))
}

/// Linear-interpolation percentile `n` of `scores`.
pub fn threshold_from_percentile(scores: &[f64], n: f64) -> Result<f64> {
    if !(n > 0.0 && n < 100.0) {
        return Err(Error::Argument(format!("percentile must lie in (0, 100), got {n}")));
    }
    percentile(scores, n).ok_or_else(|| Error::Argument("cannot take a percentile of no scores".into()))
}

/// Anomaly score and argmin per row of a score matrix.
#[derive(Debug, Clone)]
pub struct ScoredSeries {
    pub scores: Vec<f64>,
    pub argmin: Vec<usize>,
    pub warmup: usize,
    pub per_variable: ScoreMatrix,
}

impl ScoredSeries {
    /// Scores of rows with complete history.
    pub fn scorable(&self) -> &[f64] {
        &self.scores[self.warmup..]
    }
}

pub fn score_series(models: &ModelSet, data: &TimeSeriesMatrix) -> Result<ScoredSeries> {
    let per_variable = models.score_matrix(data)?;
    let mut scores = Vec::with_capacity(data.len());
    let mut argmin = Vec::with_capacity(data.len());
    for row in per_variable.m.rows() {
        let (a, i) = anomaly_score(row.as_slice().expect("row-major score matrix"))?;
        scores.push(a);
        argmin.push(i);
    }
    Ok(ScoredSeries {
        scores,
        argmin,
        warmup: per_variable.warmup,
        per_variable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub timestep: i64,
    pub score: f64,
    pub label: u8,
    pub argmin: usize,
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub names: Vec<String>,
    pub threshold: f64,
    pub rows: Vec<DetectionRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub threshold: f64,
    pub rows: usize,
    pub warmup_rows: usize,
    pub anomalies: usize,
}

impl DetectionReport {
    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn summary(&self) -> DetectionSummary {
        DetectionSummary {
            threshold: self.threshold,
            rows: self.rows.len(),
            warmup_rows: self.rows.iter().filter(|r| r.warmup).count(),
            anomalies: self.rows.iter().filter(|r| r.label == 1).count(),
        }
    }

    /// CSV with `timestep,score,label,argmin_variable,warmup`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestep", "score", "label", "argmin_variable", "warmup"])?;
        for r in &self.rows {
            w.write_record([
                r.timestep.to_string(),
                format!("{:?}", r.score),
                r.label.to_string(),
                self.names[r.argmin].clone(),
                u8::from(r.warmup).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<detection csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Labels `A > λ`; warmup rows are emitted with label 0.
pub fn detect(models: &ModelSet, test: &TimeSeriesMatrix, threshold: f64) -> Result<DetectionReport> {
    let scored = score_series(models, test)?;
    Ok(report_from(&scored, test, threshold, models.names.clone()))
}

/// Threshold at percentile `n` of the scorable test scores, then [`detect`].
pub fn detect_with_percentile(models: &ModelSet, test: &TimeSeriesMatrix, n: f64) -> Result<DetectionReport> {
    let scored = score_series(models, test)?;
    let threshold = threshold_from_percentile(scored.scorable(), n)?;
    Ok(report_from(&scored, test, threshold, models.names.clone()))
}

pub fn report_from(
    scored: &ScoredSeries,
    data: &TimeSeriesMatrix,
    threshold: f64,
    names: Vec<String>,
) -> DetectionReport {
    let rows = scored
        .scores
        .iter()
        .zip(&scored.argmin)
        .enumerate()
        .map(|(r, (&score, &argmin))| {
            let warmup = r < scored.warmup;
            DetectionRow {
                timestep: data.timestep(r),
                score,
                label: u8::from(!warmup && score > threshold),
                argmin,
                warmup,
            }
        })
        .collect();
    DetectionReport { names, threshold, rows }
}

/// Progress of [`iterative_retrain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainState {
    pub iterations: usize,
    /// Training rows still in use.
    pub keep: Vec<bool>,
    pub adjacency: Vec<Vec<Vec<u8>>>,
    /// Entry `k` counts differing adjacency entries between graphs `k` and `k + 1`.
    pub differences: Vec<usize>,
}

/// What one retraining iteration produced, passed to the observer.
pub struct RetrainIteration<'a> {
    pub iteration: usize,
    pub dag: &'a Dag,
    pub models: &'a ModelSet,
    pub state: &'a RetrainState,
}

fn adjacency_difference(a: &[Vec<u8>], b: &[Vec<u8>]) -> usize {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).filter(|(x, y)| x != y).count())
        .sum()
}

/// Discover → fit → score training rows → drop the top-scored fraction,
/// until consecutive graphs agree or the iteration cap is reached.
pub fn iterative_retrain(train: &TimeSeriesMatrix, cfg: &PipelineConfig) -> Result<(Dag, ModelSet, RetrainState)> {
    iterative_retrain_with(train, None, cfg, |_| {})
}

/// With `graph` set, discovery is skipped and only the row mask changes
/// between iterations, so the loop stops after the first removal.
pub fn iterative_retrain_with(
    train: &TimeSeriesMatrix,
    graph: Option<&Dag>,
    cfg: &PipelineConfig,
    mut observe: impl FnMut(&RetrainIteration<'_>),
) -> Result<(Dag, ModelSet, RetrainState)> {
    let fraction = cfg.retrain.removal_fraction;
    if !(fraction > 0.0 && fraction <= 0.2) {
        return Err(Error::Argument(format!(
            "removal fraction must lie in (0, 0.2], got {fraction}"
        )));
    }
    if cfg.retrain.max_iterations < 1 {
        return Err(Error::Argument("at least one iteration is required".into()));
    }
    let t = train.len();
    let per_iteration = (fraction * t as f64).floor() as usize;
    let model_seed = cfg.stage_seed("train");
    let mut state = RetrainState {
        iterations: 0,
        keep: vec![true; t],
        adjacency: Vec::new(),
        differences: Vec::new(),
    };
    loop {
        let dag = match graph {
            Some(g) => g.clone(),
            None => discover(&train.select_rows(&state.keep)?, &cfg.discovery)?,
        };
        let models = fit_models(train, &dag, &cfg.models, model_seed, cfg.threads, Some(&state.keep))?;
        let adj = dag.graph().adjacency_matrix();
        if let Some(prev) = state.adjacency.last() {
            state.differences.push(adjacency_difference(prev, &adj));
        }
        state.adjacency.push(adj);
        state.iterations += 1;
        observe(&RetrainIteration {
            iteration: state.iterations - 1,
            dag: &dag,
            models: &models,
            state: &state,
        });
        let converged = state.differences.last() == Some(&0);
        if converged || state.iterations >= cfg.retrain.max_iterations {
            info!(
                "retraining stopped after {} iteration(s){}",
                state.iterations,
                if converged { " (graph converged)" } else { "" }
            );
            return Ok((dag, models, state));
        }

        let kept = state.keep.iter().filter(|&&k| k).count();
        if kept.saturating_sub(per_iteration) < MIN_RETAINED_ROWS {
            warn!("removing more rows would leave fewer than {MIN_RETAINED_ROWS}; stopping");
            return Ok((dag, models, state));
        }
        let scored = score_series(&models, train)?;
        let mut candidates: Vec<usize> = (scored.warmup..t).filter(|&r| state.keep[r]).collect();
        candidates.sort_by(|&a, &b| scored.scores[b].total_cmp(&scored.scores[a]).then(a.cmp(&b)));
        for &r in candidates.iter().take(per_iteration) {
            state.keep[r] = false;
        }
    }
}
