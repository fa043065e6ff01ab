use std::path::PathBuf;

use causalad::config::DiscoveryAlgorithm;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "causalad",
    version,
    about = "Causality-based anomaly detection and root cause analysis for multivariate time series"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (TOML). Missing keys take their defaults.
    #[arg(long, global = true, env = "CAUSALAD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 = all cores. Defaults to the config value, or 1 without a config file.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed; overrides the config (or the spec for `simulate`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground-truth graph and labels.
    Simulate(SimulateArgs),
    /// Learn a causal graph from (normalized) data.
    Discover(DiscoverArgs),
    /// Fit local models with iterative retraining and write a model bundle.
    Train(TrainArgs),
    /// Score data with a bundle and label anomalies.
    Detect(DetectArgs),
    /// Rank root causes at the labeled timesteps of a detection file.
    Rca(RcaArgs),
    /// Compare predictions with ground-truth labels.
    Evaluate(EvaluateArgs),
    /// Collect run outputs into plot-ready CSV tables.
    Report(ReportArgs),
}

/// Half-open row range `START..END`; either bound may be omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowRange {
    pub start: Option<usize>,
    pub end: Option<usize>,
}

pub fn parse_rows(s: &str) -> Result<RowRange, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected START..END, got '{s}'"))?;
    let bound = |v: &str| -> Result<Option<usize>, String> {
        if v.is_empty() {
            Ok(None)
        } else {
            v.parse().map(Some).map_err(|_| format!("'{v}' is not a row index"))
        }
    };
    let range = RowRange {
        start: bound(a)?,
        end: bound(b)?,
    };
    if let (Some(a), Some(b)) = (range.start, range.end) {
        if a >= b {
            return Err(format!("empty row range {a}..{b}"));
        }
    }
    Ok(range)
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV: header row of column names, then numeric rows.
    #[arg(long)]
    pub data: PathBuf,
    /// Row range of the CSV to use, e.g. `0..10000` or `10000..`.
    #[arg(long, value_parser = parse_rows)]
    pub rows: Option<RowRange>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation spec (TOML). Defaults apply without one.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Algorithm {
    Ges,
    Pc,
}

impl From<Algorithm> for DiscoveryAlgorithm {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Ges => DiscoveryAlgorithm::Ges,
            Algorithm::Pc => DiscoveryAlgorithm::Pc,
        }
    }
}

#[derive(Debug, Args)]
pub struct DiscoveryArgs {
    /// Discovery algorithm [config default: ges].
    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
    /// CI test significance level for PC [config default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// BIC penalty discount for GES [config default: 20].
    #[arg(long)]
    pub penalty_discount: Option<f64>,
    /// Maximum node degree [config default: 5].
    #[arg(long)]
    pub max_degree: Option<usize>,
    /// Largest time lag searched [config default: 0].
    #[arg(long)]
    pub max_lag: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[command(flatten)]
    pub discovery: DiscoveryArgs,
    /// Output directory; receives graph.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Graph file to use instead of discovery.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    pub discovery: DiscoveryArgs,
    /// Cap on retraining iterations [config default: 10].
    #[arg(long)]
    pub retrain_iterations: Option<usize>,
    /// Fraction of training rows dropped per iteration [config default: 0.03].
    #[arg(long)]
    pub removal_fraction: Option<f64>,
    /// Held-out CSV scored after every iteration (best-F1 per iteration).
    #[arg(long, requires = "holdout_labels")]
    pub holdout: Option<PathBuf>,
    /// Row range of the held-out CSV.
    #[arg(long, value_parser = parse_rows, requires = "holdout")]
    pub holdout_rows: Option<RowRange>,
    /// Ground-truth labels for the held-out rows.
    #[arg(long, requires = "holdout")]
    pub holdout_labels: Option<PathBuf>,
    /// Bundle output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Model bundle written by `train`.
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
    /// Graph the bundle must have been trained on.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Percentile of the scores used as threshold [config default: 95].
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Explicit threshold; overrides the percentile.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output directory; receives detections.csv and summary.toml.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RcaArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// The data the detection file was computed on.
    #[command(flatten)]
    pub input: DataArgs,
    /// detections.csv written by `detect`.
    #[arg(long)]
    pub detections: PathBuf,
    /// Propagation weight of children's scores [config default: 0.5].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of ranked causes per row [config default: 3].
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Output directory; receives rca.csv.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_ks(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("'{s}' is not a positive integer")),
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction CSV from `detect` or `rca`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth labels CSV (timestep,label,root_causes).
    #[arg(long)]
    pub truth: PathBuf,
    /// Also report the best F1 over all thresholds.
    #[arg(long)]
    pub sweep: bool,
    /// Cut-offs for the hit ratio.
    #[arg(long, value_delimiter = ',', value_parser = parse_ks, default_value = "1,2,3,4")]
    pub hr_k: Vec<usize>,
    /// Random draws for the score-proportional baseline; 0 disables it.
    #[arg(long, default_value_t = 100)]
    pub baseline_trials: usize,
    /// Output directory for eval.toml and eval.csv; stdout only without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory tree holding outputs of earlier subcommands.
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn row_ranges() {
        assert_eq!(
            parse_rows("10..20").unwrap(),
            RowRange {
                start: Some(10),
                end: Some(20)
            }
        );
        assert_eq!(parse_rows("..5").unwrap().start, None);
        assert_eq!(parse_rows("5..").unwrap().end, None);
        assert!(parse_rows("5").is_err());
        assert!(parse_rows("7..7").is_err());
        assert!(parse_rows("a..3").is_err());
    }
}
