//! Per-variable estimators of the local causal mechanisms and their
//! calibrated scores `M_i ∈ [0, 1]`.

mod calibration;
mod cvae;
mod forecaster;
mod forest;
mod linear;
mod mlp;
pub mod nn;
mod pairs;

use log::{info, warn};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use calibration::ResidualCalibration;
pub use cvae::{flat_elbo_grads, gaussian_kl, Cvae, ElboTerms};
pub use forecaster::RootForecaster;
pub use forest::{average_path_length, IsolationForest};
pub use linear::LinearModel;
pub use mlp::{squared_error_grad, MlpRegressor};
pub use pairs::{build_training_pairs, ContextSpec, TrainingPair, TrainingSet};

use crate::config::{derive_seed, ConditionalEstimator, ModelConfig, RootEstimator};
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    LinearGaussian,
    MlpRegressor,
    Cvae,
    RootForecaster,
    IsolationForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Estimator {
    LinearGaussian(LinearModel),
    MlpRegressor(MlpRegressor),
    Cvae(Cvae),
    RootForecaster(RootForecaster),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Self::LinearGaussian(_) => EstimatorKind::LinearGaussian,
            Self::MlpRegressor(_) => EstimatorKind::MlpRegressor,
            Self::Cvae(_) => EstimatorKind::Cvae,
            Self::RootForecaster(_) => EstimatorKind::RootForecaster,
        }
    }

    fn predict(&self, context: ArrayView2<'_, f64>, target: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::LinearGaussian(m) => m.predict(context),
            Self::MlpRegressor(m) => m.predict(context),
            Self::Cvae(m) => m.reconstruct(context, target.view()),
            Self::RootForecaster(m) => m.predict(context),
        }
    }
}

/// One variable's fitted mechanism plus its residual calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub variable: usize,
    pub name: String,
    pub context: ContextSpec,
    pub estimator: Estimator,
    pub calibration: ResidualCalibration,
}

impl LocalModel {
    pub fn fit_conditional(
        set: &TrainingSet,
        spec: ContextSpec,
        var: (usize, &str),
        cfg: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let estimator = match cfg.conditional {
            ConditionalEstimator::LinearGaussian => {
                Estimator::LinearGaussian(LinearModel::fit(set.x.view(), set.y.view())?)
            }
            ConditionalEstimator::MlpRegressor => {
                Estimator::MlpRegressor(MlpRegressor::fit(set.x.view(), set.y.view(), &cfg.mlp, seed)?)
            }
            ConditionalEstimator::Cvae => Estimator::Cvae(Cvae::fit(set.x.view(), set.y.view(), &cfg.cvae, seed)?),
        };
        Self::calibrated(set, spec, var, estimator)
    }

    pub fn fit_forecaster(
        set: &TrainingSet,
        spec: ContextSpec,
        var: (usize, &str),
        cfg: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let f = RootForecaster::fit(set.x.view(), set.y.view(), &cfg.forecaster, seed)?;
        Self::calibrated(set, spec, var, Estimator::RootForecaster(f))
    }

    fn calibrated(set: &TrainingSet, context: ContextSpec, var: (usize, &str), estimator: Estimator) -> Result<Self> {
        let residuals = &set.y - &estimator.predict(set.x.view(), &set.y);
        let calibration = ResidualCalibration::fit(residuals.as_slice().expect("contiguous"))?;
        Ok(Self {
            variable: var.0,
            name: var.1.to_string(),
            context,
            estimator,
            calibration,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.estimator.kind()
    }

    pub fn first_row(&self) -> usize {
        self.context.first_row()
    }

    /// Residuals `x_i(t) − x̂_i(t)` for rows `first_row()..T`.
    pub fn residuals(&self, values: ArrayView2<'_, f64>) -> Array1<f64> {
        let first = self.first_row();
        let ctx = self.context.design(values, first);
        let target = values.slice(s![first.., self.variable]).to_owned();
        &target - &self.estimator.predict(ctx.view(), &target)
    }

    /// `M_i` for rows `first_row()..T`.
    pub fn score(&self, values: ArrayView2<'_, f64>) -> Vec<f64> {
        self.residuals(values)
            .iter()
            .map(|&e| self.calibration.survival(e))
            .collect()
    }
}

/// Isolation forest shared by all parentless variables; its `M` is
/// attributed to each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRootModel {
    pub variables: Vec<usize>,
    pub forest: IsolationForest,
    pub calibration: ResidualCalibration,
}

impl JointRootModel {
    pub fn fit(
        data: &TimeSeriesMatrix,
        variables: Vec<usize>,
        keep: Option<&[bool]>,
        cfg: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let rows: Vec<usize> = (0..data.len()).filter(|&t| keep.is_none_or(|k| k[t])).collect();
        if rows.len() < 50 {
            return Err(Error::Argument(format!(
                "isolation forest needs at least 50 rows, got {}",
                rows.len()
            )));
        }
        let block = data.values().select(Axis(1), &variables).select(Axis(0), &rows);
        let forest = IsolationForest::fit(block.view(), cfg.forest.trees, cfg.forest.max_samples, seed)?;
        let calibration = ResidualCalibration::fit(&forest.score(block.view()))?;
        Ok(Self {
            variables,
            forest,
            calibration,
        })
    }

    pub fn score(&self, values: ArrayView2<'_, f64>) -> Vec<f64> {
        let block = values.select(Axis(1), &self.variables);
        self.forest
            .score(block.view())
            .into_iter()
            .map(|raw| self.calibration.survival(raw))
            .collect()
    }
}

/// All fitted models for a dataset's variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub names: Vec<String>,
    pub local: Vec<Option<LocalModel>>,
    pub joint: Option<JointRootModel>,
}

/// Per-row, per-variable `M` values. Rows before `warmup` lack history and hold 1.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub m: Array2<f64>,
    pub warmup: usize,
}

impl ModelSet {
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn kind_of(&self, i: usize) -> Option<EstimatorKind> {
        match &self.local[i] {
            Some(m) => Some(m.kind()),
            None => self
                .joint
                .as_ref()
                .filter(|j| j.variables.contains(&i))
                .map(|_| EstimatorKind::IsolationForest),
        }
    }

    /// Leading rows without enough history for every model.
    pub fn warmup(&self) -> usize {
        self.local
            .iter()
            .flatten()
            .map(LocalModel::first_row)
            .max()
            .unwrap_or(0)
    }

    pub fn score_matrix(&self, data: &TimeSeriesMatrix) -> Result<ScoreMatrix> {
        if data.names() != self.names.as_slice() {
            return Err(Error::Config(format!(
                "data columns {:?} do not match model variables {:?}",
                data.names(),
                self.names
            )));
        }
        let d = self.n_vars();
        for i in 0..d {
            if self.kind_of(i).is_none() {
                return Err(Error::Config(format!("no model for variable `{}`", self.names[i])));
            }
        }
        let t = data.len();
        let warmup = self.warmup().min(t);
        let values = data.values();
        let mut m = Array2::ones((t, d));
        for model in self.local.iter().flatten() {
            let first = model.first_row();
            if first >= t {
                continue;
            }
            for (r, v) in model.score(values).into_iter().enumerate() {
                if first + r >= warmup {
                    m[[first + r, model.variable]] = v;
                }
            }
        }
        if let Some(joint) = &self.joint {
            let scores = joint.score(values);
            for &i in &joint.variables {
                for r in warmup..t {
                    m[[r, i]] = scores[r];
                }
            }
        }
        Ok(ScoreMatrix { m, warmup })
    }
}

fn run_parallel<T: Send>(threads: usize, jobs: Vec<Box<dyn FnOnce() -> T + Send + '_>>) -> Vec<T> {
    if threads == 1 || jobs.len() <= 1 {
        return jobs.into_iter().map(|job| job()).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| jobs.into_par_iter().map(|job| job()).collect()),
        Err(e) => {
            warn!("could not start a thread pool ({e}); fitting sequentially");
            jobs.into_iter().map(|job| job()).collect()
        }
    }
}

/// Fits one model per variable. Variables with parents at any lag get the
/// conditional estimator; parentless ones get the root estimator. Rows with
/// `keep[t] == false` are excluded as targets.
pub fn fit_models(
    train: &TimeSeriesMatrix,
    dag: &Dag,
    cfg: &ModelConfig,
    seed: u64,
    threads: usize,
    keep: Option<&[bool]>,
) -> Result<ModelSet> {
    let d = train.n_vars();
    if dag.n() != d || dag.names() != train.names() {
        return Err(Error::Config("graph nodes do not match data columns".into()));
    }
    if keep.is_some_and(|k| k.len() != train.len()) {
        return Err(Error::Argument("row mask length differs from the data".into()));
    }
    let parentless: Vec<usize> = (0..d).filter(|&i| dag.parents(i).is_empty()).collect();
    let joint_roots = cfg.root == RootEstimator::IsolationForest && parentless.len() >= 2;
    if cfg.root == RootEstimator::IsolationForest && parentless.len() == 1 {
        warn!("a single root variable; using the forecaster instead of an isolation forest");
    }

    let mut jobs: Vec<Box<dyn FnOnce() -> Result<Option<LocalModel>> + Send + '_>> = Vec::with_capacity(d);
    for i in 0..d {
        let name = train.names()[i].as_str();
        let model_seed = derive_seed(seed, &format!("model:{name}"));
        let is_root = dag.parents(i).is_empty();
        if is_root && joint_roots {
            jobs.push(Box::new(|| Ok(None)));
            continue;
        }
        jobs.push(Box::new(move || {
            let fitted = if is_root {
                let spec = ContextSpec::own_history(i, cfg.root_window);
                let set = TrainingSet::build(train, &spec, i, keep);
                LocalModel::fit_forecaster(&set, spec, (i, name), cfg, model_seed)
            } else {
                let spec = ContextSpec::for_parents(dag, i, cfg.window);
                let set = TrainingSet::build(train, &spec, i, keep);
                LocalModel::fit_conditional(&set, spec, (i, name), cfg, model_seed)
            };
            fitted.map(Some).map_err(|e| annotate(e, name))
        }));
    }
    let local = run_parallel(threads, jobs).into_iter().collect::<Result<Vec<_>>>()?;
    let joint = if joint_roots {
        Some(JointRootModel::fit(
            train,
            parentless,
            keep,
            cfg,
            derive_seed(seed, "model:isolation_forest"),
        )?)
    } else {
        None
    };
    info!("fitted models for {d} variables");
    Ok(ModelSet {
        names: train.names().to_vec(),
        local,
        joint,
    })
}

fn annotate(e: Error, name: &str) -> Error {
    match e {
        Error::Argument(m) => Error::Argument(format!("variable `{name}`: {m}")),
        Error::Divergence(m) => Error::Divergence(format!("variable `{name}`: {m}")),
        other => other,
    }
}
