use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use causalad::data::load_csv;
use causalad::data::Normalizer;
use causalad::evaluation::{self, evaluate_table, PredictionTable};
use causalad::graph::{Dag, MixedGraph};
use causalad::pipeline::{self, Pipeline};
use causalad::rca::{self, RcaResult};
use causalad::simulation::{simulate as run_simulation, LabelTable, SimulationSpec};
use causalad::{Error, PipelineConfig, Result, TimeSeriesMatrix};
use log::info;
use serde::{Deserialize, Serialize};

use crate::args::{
    DataArgs, DetectArgs, DiscoverArgs, DiscoveryArgs, EvaluateArgs, GlobalArgs, RcaArgs, RowRange, SimulateArgs,
    TrainArgs,
};
use crate::manifest::RunManifest;

pub const RETRAIN_FILE: &str = "retrain.json";
pub const EVAL_CSV: &str = "eval.csv";

/// Per-iteration record of a `train` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrainLog {
    pub iterations: usize,
    pub differences: Vec<usize>,
    /// Point-adjusted F1 on the held-out rows at the configured threshold.
    pub holdout_f1: Option<Vec<f64>>,
    pub holdout_best_f1: Option<Vec<f64>>,
}

fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig {
            threads: 1,
            ..PipelineConfig::default()
        },
    };
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_discovery(cfg: &mut PipelineConfig, d: &DiscoveryArgs) {
    let c = &mut cfg.discovery;
    if let Some(a) = d.algorithm {
        c.algorithm = a.into();
    }
    if let Some(v) = d.alpha {
        c.alpha = v;
    }
    if let Some(v) = d.penalty_discount {
        c.penalty_discount = v;
    }
    if let Some(v) = d.max_degree {
        c.max_degree = v;
    }
    if let Some(v) = d.max_lag {
        c.max_lag = v;
    }
}

fn load_rows(path: &Path, rows: Option<RowRange>, cfg: &PipelineConfig) -> Result<TimeSeriesMatrix> {
    let data = load_csv(path, &cfg.ingest)?;
    match rows {
        None => Ok(data),
        Some(r) => {
            let start = r.start.unwrap_or(0);
            let end = r.end.unwrap_or(data.len());
            data.slice_rows(start, end.min(data.len()))
        }
    }
}

fn load_data(input: &DataArgs, cfg: &PipelineConfig, manifest: &mut RunManifest) -> Result<TimeSeriesMatrix> {
    manifest.input("data", &input.data);
    let data = manifest.time("load", || load_rows(&input.data, input.rows, cfg))?;
    info!(
        "loaded {} rows x {} variables from {}",
        data.len(),
        data.n_vars(),
        input.data.display()
    );
    Ok(data)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn timesteps(data: &TimeSeriesMatrix) -> Vec<i64> {
    (0..data.len()).map(|r| data.timestep(r)).collect()
}

fn check_columns(pipeline: &Pipeline, data: &TimeSeriesMatrix) -> Result<()> {
    if pipeline.models.names != data.names() {
        return Err(Error::Bundle(format!(
            "bundle variables {:?} do not match data columns {:?}",
            pipeline.models.names,
            data.names()
        )));
    }
    Ok(())
}

pub fn simulate(g: &GlobalArgs, a: &SimulateArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => SimulationSpec::load(path)?,
        None => SimulationSpec::default(),
    };
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let mut m = RunManifest::new("simulate", Some(spec.seed), &spec);
    if let Some(p) = &a.spec {
        m.input("spec", p);
    }
    let ds = m.time("simulate", || run_simulation(&spec))?;
    create_dir(&a.out)?;
    m.time("write", || ds.save(&a.out))?;
    for (key, file) in [
        ("data", "data.csv"),
        ("graph", "graph.txt"),
        ("labels", "labels.csv"),
        ("sem", "sem.json"),
        ("spec", "spec.toml"),
    ] {
        m.output(key, &a.out.join(file));
    }
    m.write(&a.out)
}

pub fn discover(g: &GlobalArgs, a: &DiscoverArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    apply_discovery(&mut cfg, &a.discovery);
    cfg.validate()?;
    let mut m = RunManifest::new("discover", Some(cfg.seed), &cfg);
    let data = load_data(&a.input, &cfg, &mut m)?;
    let normed = Normalizer::fit(&data, cfg.normalize).apply(&data)?;
    let dag = m.time("discover", || causalad::discovery::discover(&normed, &cfg.discovery))?;
    info!("discovered {} edges", dag.n_edges());
    create_dir(&a.out)?;
    let path = a.out.join("graph.txt");
    dag.graph().save(&path)?;
    m.output("graph", &path);
    m.write(&a.out)
}

pub fn train(g: &GlobalArgs, a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    apply_discovery(&mut cfg, &a.discovery);
    if let Some(n) = a.retrain_iterations {
        cfg.retrain.max_iterations = n;
    }
    if let Some(f) = a.removal_fraction {
        cfg.retrain.removal_fraction = f;
    }
    cfg.validate()?;
    let mut m = RunManifest::new("train", Some(cfg.seed), &cfg);
    let data = load_data(&a.input, &cfg, &mut m)?;
    let graph = match &a.graph {
        Some(path) => {
            m.input("graph", path);
            Some(Dag::try_from(MixedGraph::load(path)?)?)
        }
        None => None,
    };
    let holdout = match (&a.holdout, &a.holdout_labels) {
        (Some(path), Some(labels)) => {
            m.input("holdout", path);
            m.input("holdout_labels", labels);
            let h = load_rows(path, a.holdout_rows, &cfg)?;
            let truth = LabelTable::load(labels)?.align(&timesteps(&h))?;
            Some((h, truth.labels))
        }
        _ => None,
    };

    let mut f1 = Vec::new();
    let mut best = Vec::new();
    let mut failure = None;
    let outcome = m.time("train", || {
        pipeline::train_observed(&data, graph, &cfg, |it, p| {
            let Some((h, truth)) = &holdout else { return };
            if failure.is_some() {
                return;
            }
            let scored = p.detect(h, &cfg.detection).and_then(|(report, scored)| {
                let fixed = evaluation::prf(&evaluation::point_adjust(&report.labels(), truth)?, truth)?;
                Ok((fixed.f1, evaluation::best_f1_sweep(&scored.scores, truth)?.f1))
            });
            match scored {
                Ok((f, b)) => {
                    info!("iteration {it}: held-out F1 {f:.4}, best F1 {b:.4}");
                    f1.push(f);
                    best.push(b);
                }
                Err(e) => failure = Some(e),
            }
        })
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    create_dir(&a.out)?;
    outcome.pipeline.save(&a.out)?;
    m.output("bundle", &a.out);
    let log = RetrainLog {
        iterations: outcome.retrain.iterations,
        differences: outcome.retrain.differences.clone(),
        holdout_f1: holdout.is_some().then_some(f1),
        holdout_best_f1: holdout.is_some().then_some(best),
    };
    let path = a.out.join(RETRAIN_FILE);
    write_text(&path, &serde_json::to_string_pretty(&log)?)?;
    m.output("retrain", &path);
    m.write(&a.out)
}

pub fn detect(g: &GlobalArgs, a: &DetectArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(p) = a.percentile {
        cfg.detection.percentile = p;
    }
    if a.threshold.is_some() {
        cfg.detection.threshold = a.threshold;
    }
    cfg.validate()?;
    let mut m = RunManifest::new("detect", Some(cfg.seed), &cfg);
    m.input("bundle", &a.bundle);
    let pipeline = Pipeline::load(&a.bundle)?;
    if let Some(path) = &a.graph {
        m.input("graph", path);
        pipeline.verify_graph(&MixedGraph::load(path)?)?;
    }
    let data = load_data(&a.input, &cfg, &mut m)?;
    check_columns(&pipeline, &data)?;
    let (report, _) = m.time("detect", || pipeline.detect(&data, &cfg.detection))?;
    create_dir(&a.out)?;
    let csv = a.out.join("detections.csv");
    report.save_csv(&csv)?;
    let summary = a.out.join("summary.toml");
    write_text(
        &summary,
        &toml::to_string(&report.summary()).expect("summary is serializable"),
    )?;
    m.output("detections", &csv);
    m.output("summary", &summary);
    m.write(&a.out)
}

pub fn rca(g: &GlobalArgs, a: &RcaArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(v) = a.alpha {
        cfg.rca.alpha = v;
    }
    if let Some(k) = a.top_k {
        cfg.rca.top_k = k;
    }
    cfg.validate()?;
    let mut m = RunManifest::new("rca", Some(cfg.seed), &cfg);
    m.input("bundle", &a.bundle);
    m.input("detections", &a.detections);
    let pipeline = Pipeline::load(&a.bundle)?;
    let data = load_data(&a.input, &cfg, &mut m)?;
    check_columns(&pipeline, &data)?;
    let detections = PredictionTable::load(&a.detections)?;

    let scored = m.time("score", || pipeline.score(&data))?;
    let full = causalad::detection::report_from(&scored, &data, f64::NAN, pipeline.models.names.clone());
    let row_of: HashMap<i64, usize> = timesteps(&data).into_iter().enumerate().map(|(r, t)| (t, r)).collect();
    let mut report = full.clone();
    report.rows.clear();
    let mut results: Vec<Option<RcaResult>> = Vec::with_capacity(detections.timesteps.len());
    let k = cfg.rca.top_k.min(pipeline.dag.n());
    m.time("rca", || -> Result<()> {
        for (&t, &label) in detections.timesteps.iter().zip(&detections.labels) {
            let &r = row_of
                .get(&t)
                .ok_or_else(|| Error::Schema(format!("timestep {t} of the detection file is not in the data")))?;
            let mut row = full.rows[r].clone();
            row.label = label;
            results.push(if label == 1 {
                let mrow = scored.per_variable.m.row(r).to_vec();
                Some(rca::analyze(t, &mrow, &pipeline.dag, cfg.rca.alpha, k)?)
            } else {
                None
            });
            report.rows.push(row);
        }
        Ok(())
    })?;
    report.threshold = full.threshold;
    create_dir(&a.out)?;
    let path = a.out.join("rca.csv");
    rca::write_annotated_csv(create_file(&path)?, &report, &results, k)?;
    m.output("rca", &path);
    m.write(&a.out)
}

pub fn evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> Result<()> {
    let cfg = load_config(g)?;
    cfg.validate()?;
    let mut m = RunManifest::new("evaluate", Some(cfg.seed), &cfg);
    m.input("pred", &a.pred);
    m.input("truth", &a.truth);
    let pred = PredictionTable::load(&a.pred)?;
    let truth = LabelTable::load(&a.truth)?.align(&pred.timesteps)?;
    let report = m.time("evaluate", || {
        evaluate_table(
            &pred,
            &truth.labels,
            &truth.root_causes,
            a.sweep,
            &a.hr_k,
            a.baseline_trials,
            cfg.stage_seed("evaluate:baseline"),
        )
    })?;
    let text = report.to_toml_string();
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        let toml_path = out.join("eval.toml");
        write_text(&toml_path, &text)?;
        let csv_path = out.join(EVAL_CSV);
        report.write_csv(create_file(&csv_path)?)?;
        m.output("eval_toml", &toml_path);
        m.output("eval_csv", &csv_path);
        m.write(out)?;
    }
    Ok(())
}
