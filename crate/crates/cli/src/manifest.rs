use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// Wall-clock measurements; they vary between runs, so they live only here.
    pub timings: serde_json::Map<String, Value>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn start(command: &str, master_seed: u64, config: Value) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: serde_json::Map::new(),
            started_unix: now(),
            finished_unix: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
                .collect();
            files.sort();
            for f in files {
                self.input(&f)?;
            }
            return Ok(());
        }
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.timings.insert(name.into(), Value::from(seconds));
    }

    pub fn finish(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished_unix = now();
        let p = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).expect("serializable manifest") + "\n";
        std::fs::write(&p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }
}
