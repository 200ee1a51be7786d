use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Stable identifier of `(command, config, seed)`; every JSON output carries it.
    pub run_id: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub complete: bool,
    pub outputs: Vec<String>,
}

/// An output directory whose manifest is written before any result.
pub struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// FNV-1a over the canonical JSON of the inputs.
fn run_id(command: &str, config: &serde_json::Value, seed: u64) -> String {
    let text = format!("{command}\u{1f}{config}\u{1f}{seed}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

impl RunDir {
    pub fn create(
        dir: &Path,
        command: &str,
        config: &impl Serialize,
        seed: u64,
        planned_outputs: &[&str],
    ) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
        let config = serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?;
        let manifest = RunManifest {
            command: command.to_string(),
            run_id: run_id(command, &config, seed),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: None,
            complete: false,
            outputs: planned_outputs.iter().map(|s| s.to_string()).collect(),
        };
        let run = Self {
            dir: dir.to_path_buf(),
            manifest,
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> CliResult<()> {
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| runtime(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| runtime(&path, e))
    }

    fn register(&mut self, name: &str) {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
    }

    /// Writes `{"run_id": ..., "manifest": "manifest.json", <payload>}`.
    pub fn write_json(&mut self, name: &str, payload: &impl Serialize) -> CliResult<()> {
        let path = self.dir.join(name);
        let mut value = serde_json::to_value(payload).map_err(|e| runtime(&path, e))?;
        let wrapped = match value {
            serde_json::Value::Object(ref mut map) => {
                let mut out = serde_json::Map::new();
                out.insert("run_id".into(), self.manifest.run_id.clone().into());
                out.insert("manifest".into(), MANIFEST.into());
                out.append(map);
                serde_json::Value::Object(out)
            }
            other => serde_json::json!({ "run_id": self.manifest.run_id, "manifest": MANIFEST, "data": other }),
        };
        let text = serde_json::to_string_pretty(&wrapped).map_err(|e| runtime(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| runtime(&path, e))?;
        self.register(name);
        Ok(())
    }

    pub fn write_csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> CliResult<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| runtime(&path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| runtime(&path, e))?;
        }
        w.flush().map_err(|e| runtime(&path, e))?;
        self.register(name);
        Ok(())
    }

    /// Marks the run complete.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.manifest.finished_unix = Some(now());
        self.manifest.complete = true;
        self.write_manifest()?;
        Ok(self.dir)
    }
}
