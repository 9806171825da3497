use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Writes `rows` under an explicit header so empty files still parse.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool: &'static str,
    pub version: &'static str,
    pub git_commit: Option<String>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub exit_code: i32,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig, workers: usize) -> Self {
        Self {
            command: command.to_string(),
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            git_commit: git_commit(),
            seeds: (0..config.trials as u64)
                .map(|t| config.seed.wrapping_add(t))
                .collect(),
            workers,
            started_unix: unix_seconds(),
            finished_unix: 0.0,
            exit_code: 0,
        }
    }

    pub fn finish(mut self, dir: &Path, exit_code: i32) -> Result<(), CliError> {
        self.finished_unix = unix_seconds();
        self.exit_code = exit_code;
        write_json(&dir.join("manifest.json"), &self)
    }
}

fn git_commit() -> Option<String> {
    let out = Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Creates `dir` and writes the resolved config into it.
pub fn prepare_dir(dir: &Path, config: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), config.to_json() + "\n")?;
    Ok(())
}
