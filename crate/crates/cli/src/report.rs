//! `report`: gathers manifests under a run directory into plot-ready CSVs.
//!
//! * `metrics.csv`: one row per `evaluate` output, with the discovery settings
//!   of the `train` run its predictions came from.
//! * `f1_vs_iteration.csv` and `adjacency_difference_vs_iteration.csv`: one
//!   row per retraining iteration of every `train` output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use causalad::{Error, Result};
use serde_json::Value;
use walkdir::WalkDir;

use crate::args::ReportArgs;
use crate::commands::{RetrainLog, EVAL_CSV, RETRAIN_FILE};
use crate::manifest::{RunManifest, MANIFEST_FILE};

const PARAMS: [&str; 5] = ["algorithm", "penalty_discount", "max_degree", "alpha", "max_lag"];

fn manifest_dir(path: &Path) -> Option<PathBuf> {
    if path.is_dir() {
        Some(path.to_path_buf())
    } else {
        path.parent().map(Path::to_path_buf)
    }
}

/// Follows input paths back to the `train` run that produced them.
fn upstream_train(m: &RunManifest, depth: usize) -> Option<RunManifest> {
    if depth == 0 {
        return None;
    }
    for path in m.inputs.values() {
        let Some(dir) = manifest_dir(Path::new(path)) else {
            continue;
        };
        let Ok(up) = RunManifest::read(&dir) else { continue };
        if up.subcommand == "train" {
            return Some(up);
        }
        if let Some(t) = upstream_train(&up, depth - 1) {
            return Some(t);
        }
    }
    None
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn read_metrics(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((
            rec.get(0).unwrap_or("").to_string(),
            rec.get(1).unwrap_or("").to_string(),
        ));
    }
    Ok(out)
}

fn group_name(run: &Path, dir: &Path) -> String {
    match dir.strip_prefix(run) {
        Ok(rel) if rel.as_os_str().is_empty() => ".".to_string(),
        Ok(rel) => rel.display().to_string(),
        Err(_) => dir.display().to_string(),
    }
}

struct MetricRow {
    group: String,
    graph: String,
    params: Vec<String>,
    metrics: BTreeMap<String, String>,
}

pub fn run(a: &ReportArgs) -> Result<()> {
    if !a.run.is_dir() {
        return Err(Error::Argument(format!("{} is not a directory", a.run.display())));
    }
    let mut rows = Vec::new();
    let mut metric_names: Vec<String> = Vec::new();
    let mut traces: Vec<(String, RetrainLog)> = Vec::new();

    let walker = WalkDir::new(&a.run).sort_by_file_name().into_iter();
    for entry in walker.filter_map(|e| e.ok()) {
        if entry.file_name() != MANIFEST_FILE {
            continue;
        }
        let dir = entry.path().parent().unwrap_or(&a.run).to_path_buf();
        let manifest = RunManifest::read(&dir)?;
        let group = group_name(&a.run, &dir);
        match manifest.subcommand.as_str() {
            "evaluate" if dir.join(EVAL_CSV).is_file() => {
                let metrics = read_metrics(&dir.join(EVAL_CSV))?;
                for (name, _) in &metrics {
                    if !metric_names.contains(name) {
                        metric_names.push(name.clone());
                    }
                }
                let train = upstream_train(&manifest, 4);
                let (graph, params) = match &train {
                    Some(t) => (
                        if t.inputs.contains_key("graph") {
                            "supplied"
                        } else {
                            "discovered"
                        }
                        .to_string(),
                        PARAMS.iter().map(|p| value_text(&t.config["discovery"][*p])).collect(),
                    ),
                    None => (String::new(), vec![String::new(); PARAMS.len()]),
                };
                rows.push(MetricRow {
                    group,
                    graph,
                    params,
                    metrics: metrics.into_iter().collect(),
                });
            }
            "train" if dir.join(RETRAIN_FILE).is_file() => {
                let text = std::fs::read_to_string(dir.join(RETRAIN_FILE))
                    .map_err(|e| Error::io(dir.join(RETRAIN_FILE), e))?;
                traces.push((group, serde_json::from_str(&text)?));
            }
            _ => {}
        }
    }
    if rows.is_empty() && traces.is_empty() {
        return Err(Error::Argument(format!(
            "no evaluation or training outputs found under {}",
            a.run.display()
        )));
    }

    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    if !rows.is_empty() {
        let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
        let mut header = vec!["group".to_string(), "graph".to_string()];
        header.extend(PARAMS.iter().map(|p| p.to_string()));
        header.extend(metric_names.iter().cloned());
        w.write_record(&header)?;
        for r in &rows {
            let mut rec = vec![r.group.clone(), r.graph.clone()];
            rec.extend(r.params.iter().cloned());
            rec.extend(
                metric_names
                    .iter()
                    .map(|n| r.metrics.get(n).cloned().unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(out.join("metrics.csv"), e))?;
    }

    if !traces.is_empty() {
        let mut f1 = csv::Writer::from_path(out.join("f1_vs_iteration.csv"))?;
        f1.write_record(["series", "iteration", "f1", "best_f1"])?;
        let mut diff = csv::Writer::from_path(out.join("adjacency_difference_vs_iteration.csv"))?;
        diff.write_record(["series", "iteration", "adjacency_difference"])?;
        for (series, log) in &traces {
            let cell = |v: &Option<Vec<f64>>, i: usize| {
                v.as_ref()
                    .and_then(|v| v.get(i))
                    .map(|x| format!("{x:?}"))
                    .unwrap_or_default()
            };
            for i in 0..log.iterations {
                f1.write_record([
                    series.clone(),
                    i.to_string(),
                    cell(&log.holdout_f1, i),
                    cell(&log.holdout_best_f1, i),
                ])?;
            }
            for (k, d) in log.differences.iter().enumerate() {
                diff.write_record([series.clone(), (k + 1).to_string(), d.to_string()])?;
            }
        }
        f1.flush().map_err(|e| Error::io(out.join("f1_vs_iteration.csv"), e))?;
        diff.flush()
            .map_err(|e| Error::io(out.join("adjacency_difference_vs_iteration.csv"), e))?;
    }
    Ok(())
}
