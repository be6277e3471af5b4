use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::{CliError, CommandOutput, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub output_dir: String,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub seeds: Vec<u64>,
    pub files: Vec<OutputFile>,
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect::<Map<_, _>>())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// SHA-256 of the canonical (sorted-key, compact) JSON of the run inputs.
pub fn config_hash(command: &str, cfg: &RunConfig, seed: u64, tolerance: f64) -> Result<String, CliError> {
    let value = json!({ "command": command, "config": cfg, "seed": seed, "tolerance": tolerance });
    let text = serde_json::to_string(&canonical(value)).map_err(|e| CliError::Model(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputFile, CliError> {
    std::fs::write(dir.join(name), bytes)?;
    Ok(OutputFile { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() })
}

/// Writes the report, CSV tables and manifest; returns the output directory.
#[allow(clippy::too_many_arguments)]
pub fn write_outputs(
    root: &Path,
    command: &str,
    config_path: &Path,
    cfg: &RunConfig,
    seed: u64,
    tolerance: f64,
    output: &CommandOutput,
    elapsed: Duration,
) -> Result<PathBuf, CliError> {
    let hash = config_hash(command, cfg, seed, tolerance)?;
    let dir = root.join(command).join(&hash[..16]);
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut report = serde_json::to_string_pretty(&output.report).map_err(|e| CliError::Model(e.to_string()))?;
    report.push('\n');
    files.push(write_file(&dir, "report.json", report.as_bytes())?);
    for (name, text) in &output.csv {
        files.push(write_file(&dir, name, text.as_bytes())?);
    }
    let manifest = Manifest {
        command: command.to_string(),
        config_path: config_path.display().to_string(),
        config_hash: hash,
        output_dir: dir.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: elapsed.as_secs_f64(),
        seeds: output.seeds.clone(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Model(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(dir)
}
