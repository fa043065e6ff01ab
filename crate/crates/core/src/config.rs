//! Pipeline configuration. Every key has a default, so an empty document is valid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{IngestOptions, NormalizeMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryAlgorithm {
    #[default]
    Ges,
    Pc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub algorithm: DiscoveryAlgorithm,
    /// Significance level of the conditional-independence tests (PC).
    pub alpha: f64,
    pub max_degree: usize,
    pub penalty_discount: f64,
    /// Largest time lag searched; 0 keeps discovery contemporaneous.
    pub max_lag: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            algorithm: DiscoveryAlgorithm::Ges,
            alpha: 0.05,
            max_degree: 5,
            penalty_discount: 20.0,
            max_lag: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalEstimator {
    LinearGaussian,
    MlpRegressor,
    Cvae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootEstimator {
    Forecaster,
    IsolationForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvaeConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Monte Carlo draws of the latent per example in the ELBO.
    pub mc_samples: usize,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 20, 10],
            latent: 5,
            epochs: 80,
            learning_rate: 1e-3,
            batch_size: 1024,
            mc_samples: 1,
        }
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 20, 10],
            epochs: 80,
            learning_rate: 1e-3,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_samples: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conditional: ConditionalEstimator,
    pub root: RootEstimator,
    /// History window `k` per parent for conditional models.
    pub window: usize,
    /// History window of the univariate root forecaster.
    pub root_window: usize,
    pub cvae: CvaeConfig,
    pub mlp: NetConfig,
    pub forecaster: NetConfig,
    pub forest: ForestConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conditional: ConditionalEstimator::Cvae,
            root: RootEstimator::Forecaster,
            window: 1,
            root_window: 20,
            cvae: CvaeConfig::default(),
            mlp: NetConfig::default(),
            forecaster: NetConfig {
                epochs: 50,
                ..NetConfig::default()
            },
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Percentile `n` of the test scores used as threshold.
    pub percentile: f64,
    /// Explicit threshold; overrides the percentile rule when set.
    pub threshold: Option<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            percentile: 95.0,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcaConfig {
    /// Weight of the children's scores in the propagated root-cause score.
    pub alpha: f64,
    pub top_k: usize,
}

impl Default for RcaConfig {
    fn default() -> Self {
        Self { alpha: 0.5, top_k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainConfig {
    pub removal_fraction: f64,
    /// 1 disables iterative retraining.
    pub max_iterations: usize,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            removal_fraction: 0.03,
            max_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads for per-variable fits; 0 = all cores, 1 = sequential.
    pub threads: usize,
    pub normalize: NormalizeMode,
    pub ingest: IngestOptions,
    pub discovery: DiscoveryConfig,
    pub models: ModelConfig,
    pub detection: DetectionConfig,
    pub rca: RcaConfig,
    pub retrain: RetrainConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        let d = &self.discovery;
        if !(d.alpha > 0.0 && d.alpha < 1.0) {
            return bad("discovery.alpha", format!("must lie in (0, 1), got {}", d.alpha));
        }
        if d.max_degree < 1 {
            return bad("discovery.max_degree", "must be at least 1".into());
        }
        if !(d.penalty_discount > 0.0) {
            return bad("discovery.penalty_discount", "must be positive".into());
        }
        if !(self.rca.alpha >= 0.0 && self.rca.alpha < 1.0) {
            return bad("rca.alpha", format!("must lie in [0, 1), got {}", self.rca.alpha));
        }
        if self.rca.top_k < 1 {
            return bad("rca.top_k", "must be at least 1".into());
        }
        let p = self.detection.percentile;
        if !(p > 0.0 && p < 100.0) {
            return bad("detection.percentile", format!("must lie in (0, 100), got {p}"));
        }
        let r = &self.retrain;
        if !(r.removal_fraction > 0.0 && r.removal_fraction <= 0.2) {
            return bad(
                "retrain.removal_fraction",
                format!("must lie in (0, 0.2], got {}", r.removal_fraction),
            );
        }
        if r.max_iterations < 1 {
            return bad("retrain.max_iterations", "must be at least 1".into());
        }
        let m = &self.models;
        if m.window < 1 || m.root_window < 1 {
            return bad("models.window", "windows must be at least 1".into());
        }
        if m.cvae.latent < 1 {
            return bad("models.cvae.latent", "must be at least 1".into());
        }
        if m.cvae.mc_samples < 1 {
            return bad("models.cvae.mc_samples", "must be at least 1".into());
        }
        for (key, net) in [("models.mlp", &m.mlp), ("models.forecaster", &m.forecaster)] {
            if net.batch_size < 1 || !(net.learning_rate > 0.0) {
                return bad(key, "batch_size and learning_rate must be positive".into());
            }
        }
        if m.cvae.batch_size < 1 || !(m.cvae.learning_rate > 0.0) {
            return bad("models.cvae", "batch_size and learning_rate must be positive".into());
        }
        if m.forest.trees < 1 || m.forest.max_samples < 2 {
            return bad("models.forest", "needs at least one tree and two samples".into());
        }
        Ok(())
    }

    /// Seed for a named stage, derived from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

/// Deterministic seed derivation from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.models.cvae.hidden, vec![10, 20, 10]);
        assert_eq!(c.models.cvae.latent, 5);
        assert_eq!(c.models.root_window, 20);
        assert_eq!(c.models.forest.max_samples, 10_000);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::from_toml_str("[discovery]\nmax_degre = 3\n").unwrap_err();
        assert!(err.to_string().contains("max_degre"), "{err}");
    }

    #[test]
    fn bounds_checked() {
        for text in [
            "[discovery]\nalpha = 1.0",
            "[discovery]\nmax_degree = 0",
            "[discovery]\npenalty_discount = 0.0",
            "[rca]\nalpha = 1.0",
            "[detection]\npercentile = 100.0",
            "[retrain]\nremoval_fraction = 0.0",
        ] {
            assert!(PipelineConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = PipelineConfig::default();
        c.detection.threshold = Some(0.9);
        c.discovery.algorithm = DiscoveryAlgorithm::Pc;
        let back = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn stage_seeds_differ() {
        let c = PipelineConfig::default();
        assert_ne!(c.stage_seed("discover"), c.stage_seed("train"));
        assert_eq!(c.stage_seed("train"), c.stage_seed("train"));
    }
}
