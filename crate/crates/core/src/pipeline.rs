//! End-to-end training, scoring and evaluation, plus the on-disk model bundle.

use std::collections::BTreeSet;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{DetectionConfig, PipelineConfig};
use crate::data::{Normalizer, TimeSeriesMatrix};
use crate::detection::{
    iterative_retrain_with, report_from, score_series, threshold_from_percentile, DetectionReport, RetrainState,
    ScoredSeries,
};
use crate::error::{Error, Result};
use crate::evaluation::{self, BestF1, EvalReport, HitRatio, SegmentRca};
use crate::graph::{Dag, MixedGraph};
use crate::models::{EstimatorKind, JointRootModel, LocalModel, ModelSet};

pub const BUNDLE_FORMAT: u32 = 1;
const MANIFEST: &str = "manifest.json";
const GRAPH_FILE: &str = "graph.txt";

/// Normalizer, graph and fitted models: everything detection needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub normalizer: Normalizer,
    pub dag: Dag,
    pub models: ModelSet,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pipeline: Pipeline,
    pub retrain: RetrainState,
}

/// Fits the normalizer on `train`, then runs the retraining loop, either
/// with discovery or on the supplied graph.
pub fn train(train: &TimeSeriesMatrix, graph: Option<Dag>, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    train_observed(train, graph, cfg, |_, _| {})
}

/// [`train`] that hands every retraining iteration, as a usable pipeline,
/// to `observe`.
pub fn train_observed(
    train: &TimeSeriesMatrix,
    graph: Option<Dag>,
    cfg: &PipelineConfig,
    mut observe: impl FnMut(usize, &Pipeline),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if graph.as_ref().is_some_and(|g| g.names() != train.names()) {
        return Err(Error::Config("graph nodes do not match data columns".into()));
    }
    let normalizer = Normalizer::fit(train, cfg.normalize);
    let normed = normalizer.apply(train)?;
    let (dag, models, retrain) = iterative_retrain_with(&normed, graph.as_ref(), cfg, |it| {
        let snapshot = Pipeline {
            normalizer: normalizer.clone(),
            dag: it.dag.clone(),
            models: it.models.clone(),
        };
        observe(it.iteration, &snapshot);
    })?;
    info!("trained {} models on {} rows", models.n_vars(), train.len());
    Ok(TrainOutcome {
        pipeline: Pipeline {
            normalizer,
            dag,
            models,
        },
        retrain,
    })
}

impl Pipeline {
    pub fn score(&self, data: &TimeSeriesMatrix) -> Result<ScoredSeries> {
        score_series(&self.models, &self.normalizer.apply(data)?)
    }

    /// Threshold from the explicit override, else the percentile of the
    /// scorable rows.
    pub fn detect(&self, data: &TimeSeriesMatrix, cfg: &DetectionConfig) -> Result<(DetectionReport, ScoredSeries)> {
        let scored = self.score(data)?;
        let threshold = match cfg.threshold {
            Some(t) => t,
            None => threshold_from_percentile(scored.scorable(), cfg.percentile)?,
        };
        let report = report_from(&scored, data, threshold, self.models.names.clone());
        Ok((report, scored))
    }

    pub fn graph_hash(&self) -> String {
        self.dag.graph().content_hash()
    }

    /// Writes the manifest, the graph, and one parameter file per model.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let model_dir = dir.join("models");
        std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
        let mut variables = Vec::with_capacity(self.models.n_vars());
        for (i, name) in self.models.names.iter().enumerate() {
            let kind = self
                .models
                .kind_of(i)
                .ok_or_else(|| Error::Bundle(format!("no model for `{name}`")))?;
            let file = match &self.models.local[i] {
                Some(model) => {
                    let file = format!("models/{i:03}.json");
                    write_json(&dir.join(&file), model)?;
                    Some(file)
                }
                None => None,
            };
            variables.push(ManifestVariable {
                name: name.clone(),
                kind,
                file,
            });
        }
        let joint = match &self.models.joint {
            Some(j) => {
                let file = "models/joint_roots.json".to_string();
                write_json(&dir.join(&file), j)?;
                Some(file)
            }
            None => None,
        };
        self.dag.graph().save(dir.join(GRAPH_FILE))?;
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT,
            graph_hash: self.graph_hash(),
            normalizer: self.normalizer.clone(),
            variables,
            joint,
        };
        write_json(&dir.join(MANIFEST), &manifest)
    }

    /// Loads a bundle and checks its stored graph against the manifest hash.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: BundleManifest = read_json(&dir.join(MANIFEST))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::Bundle(format!(
                "unsupported bundle format {} (expected {BUNDLE_FORMAT})",
                manifest.format
            )));
        }
        let graph = MixedGraph::load(dir.join(GRAPH_FILE))?;
        check_hash(&manifest.graph_hash, &graph)?;
        let dag = Dag::try_from(graph)?;
        let names: Vec<String> = manifest.variables.iter().map(|v| v.name.clone()).collect();
        if names.as_slice() != dag.names() {
            return Err(Error::Bundle("manifest variables differ from graph nodes".into()));
        }
        let mut local = Vec::with_capacity(names.len());
        for v in &manifest.variables {
            local.push(match &v.file {
                Some(f) => {
                    let model: LocalModel = read_json(&dir.join(f))?;
                    if model.kind() != v.kind {
                        return Err(Error::Bundle(format!(
                            "`{}`: manifest kind differs from parameter file",
                            v.name
                        )));
                    }
                    Some(model)
                }
                None => None,
            });
        }
        let joint: Option<JointRootModel> = manifest.joint.as_ref().map(|f| read_json(&dir.join(f))).transpose()?;
        Ok(Self {
            normalizer: manifest.normalizer,
            dag,
            models: ModelSet { names, local, joint },
        })
    }

    /// Refuses a graph that is not the one the models were fitted on.
    pub fn verify_graph(&self, graph: &MixedGraph) -> Result<()> {
        check_hash(&self.graph_hash(), graph)
    }
}

fn check_hash(expected: &str, graph: &MixedGraph) -> Result<()> {
    let actual = graph.content_hash();
    if actual != expected {
        return Err(Error::Bundle(format!(
            "graph hash {actual} does not match bundle hash {expected}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleManifest {
    format: u32,
    graph_hash: String,
    normalizer: Normalizer,
    variables: Vec<ManifestVariable>,
    joint: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestVariable {
    name: String,
    kind: EstimatorKind,
    file: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Bundle(format!("{}: {e}", path.display())))
}

/// Detection and root-cause metrics of one scored test split.
#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    pub report: EvalReport,
    pub best: BestF1,
    pub segments: Vec<SegmentRca>,
    pub truth_causes: Vec<Vec<usize>>,
}

/// Scores `test`, labels it at the configured threshold, and computes
/// point-adjusted metrics, the best-F1 sweep and HR@k for each `k` in `ks`
/// with the score-proportional baseline alongside.
pub fn evaluate_split(
    pipeline: &Pipeline,
    test: &TimeSeriesMatrix,
    truth: &[u8],
    causes_per_step: &[Vec<usize>],
    cfg: &PipelineConfig,
    ks: &[usize],
    baseline_trials: usize,
) -> Result<SplitEvaluation> {
    if truth.len() != test.len() || causes_per_step.len() != test.len() {
        return Err(Error::Argument("truth labels must align with the test rows".into()));
    }
    let (report, scored) = pipeline.detect(test, &cfg.detection)?;
    let pred = report.labels();
    let fixed = evaluation::prf(&evaluation::point_adjust(&pred, truth)?, truth)?;
    let best = evaluation::best_f1_sweep(&scored.scores, truth)?;
    let segments = evaluation::segment_rca(
        &scored.scores,
        &pred,
        truth,
        scored.per_variable.m.view(),
        &pipeline.dag,
        cfg.rca.alpha,
    )?;
    let truth_causes: Vec<Vec<usize>> = segments
        .iter()
        .map(|s| {
            let set: BTreeSet<usize> = causes_per_step[s.start..s.end].iter().flatten().copied().collect();
            set.into_iter().collect()
        })
        .collect();
    let rankings: Vec<Option<Vec<usize>>> = segments.iter().map(SegmentRca::ranking_if_detected).collect();
    let initial: Vec<Option<Vec<f64>>> = segments.iter().map(SegmentRca::initial_if_detected).collect();
    let baseline_seed = cfg.stage_seed("evaluate:baseline");
    let mut hit_ratios = Vec::with_capacity(ks.len());
    for &k in ks {
        hit_ratios.push(HitRatio {
            k,
            ours: evaluation::hit_ratio_at_k(&rankings, &truth_causes, k)?,
            baseline: if baseline_trials > 0 {
                Some(evaluation::baseline_hit_ratio(
                    &initial,
                    &truth_causes,
                    k,
                    baseline_trials,
                    baseline_seed,
                )?)
            } else {
                None
            },
        });
    }
    Ok(SplitEvaluation {
        report: EvalReport {
            fixed,
            best: Some(best),
            hit_ratios,
        },
        best,
        segments,
        truth_causes,
    })
}
