//! Provenance record written next to every subcommand's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use causalad::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>, config: impl Serialize) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, key: &str, path: &Path) {
        self.inputs.insert(key.to_string(), path.display().to_string());
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.outputs.insert(key.to_string(), path.display().to_string());
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
