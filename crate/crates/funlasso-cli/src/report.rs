//! Machine-readable run reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

/// Summary of one CLI invocation: effective configuration, per-phase
/// timings, produced files and headline metrics.
#[derive(Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub timings_ms: BTreeMap<String, u128>,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

impl RunReport {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            timings_ms: BTreeMap::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    /// Time a phase and record it.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings_ms.insert(phase.to_string(), t0.elapsed().as_millis());
        out
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write the report itself and return its path.
    pub fn write(mut self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{stem}_report.json"));
        self.outputs.push(path.display().to_string());
        // Every other referenced output must already exist.
        for out in &self.outputs {
            if out != &path.display().to_string() && !Path::new(out).exists() {
                anyhow::bail!("declared output {out} was not written");
            }
        }
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
