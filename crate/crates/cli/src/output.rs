//! Output directory bookkeeping, CSV/JSON writers and the run summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(format!("creating {}", root.display()), e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    pub fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

/// Shortest round-trip decimal form, so reruns produce identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn header(fixed: &[&str]) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).collect()
}

/// `prefix_1..prefix_m`
pub fn indexed(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: String,
    pub name: String,
    pub seed: u64,
    pub scenario_hash: String,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
    /// Points whose solver did not return a feasible answer.
    pub solver_failures: usize,
    pub notes: Vec<String>,
    pub resolved: serde_json::Value,
    pub results: serde_json::Value,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub solver_failures: usize,
}

pub struct SummaryInput {
    pub command: String,
    pub name: String,
    pub seed: u64,
    pub hash: String,
    pub started: Instant,
    pub solver_failures: usize,
    pub notes: Vec<String>,
    pub resolved: serde_json::Value,
    pub results: serde_json::Value,
}

pub fn write_summary(out: &mut OutputDir, s: SummaryInput) -> CliResult<RunReport> {
    let mut files = out.files().to_vec();
    files.push("summary.json".into());
    let summary = Summary {
        toolkit: "relaystab",
        version: env!("CARGO_PKG_VERSION"),
        command: s.command,
        name: s.name,
        seed: s.seed,
        scenario_hash: s.hash,
        wall_clock_seconds: s.started.elapsed().as_secs_f64(),
        files: files.clone(),
        solver_failures: s.solver_failures,
        notes: s.notes,
        resolved: s.resolved,
        results: s.results,
    };
    out.json("summary.json", &summary)?;
    Ok(RunReport { out_dir: out.root.clone(), files, solver_failures: s.solver_failures })
}

pub fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}
