use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ntk::{Check, ConvergenceReport, DynamicsReport, InitDiagnostics};
use crate::optim::IterationRecord;

use super::config::ExperimentConfig;

/// Column order of the metrics CSV.
pub const METRICS_COLUMNS: [&str; 6] = [
    "iteration",
    "epoch",
    "batch_index",
    "wall_time_ms",
    "loss",
    "residual_norm",
];

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {message}")]
pub struct WriteError {
    pub path: PathBuf,
    pub message: String,
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> WriteError {
    WriteError {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes one row per record. `wall_time_ms` stays empty unless
/// `record_wall_time` is set, which keeps repeated runs byte-identical.
pub fn write_metrics_csv(path: &Path, records: &[IterationRecord], record_wall_time: bool) -> Result<(), WriteError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| write_err(path, e))?;
    w.write_record(METRICS_COLUMNS).map_err(|e| write_err(path, e))?;
    for r in records {
        let wall = if record_wall_time {
            r.wall_time_ms.to_string()
        } else {
            String::new()
        };
        w.write_record([
            r.iteration.to_string(),
            r.epoch.to_string(),
            r.batch_index.map_or(String::new(), |b| b.to_string()),
            wall,
            r.loss.to_string(),
            r.residual_norm.to_string(),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Per-iteration wall times, kept apart from the metrics table.
pub fn write_timing_csv(path: &Path, records: &[IterationRecord]) -> Result<(), WriteError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| write_err(path, e))?;
    w.write_record(["iteration", "wall_time_ms"]).map_err(|e| write_err(path, e))?;
    for r in records {
        w.write_record([r.iteration.to_string(), format!("{:.3}", r.wall_time_ms)])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Self-describing result of one command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub init_diagnostics: Option<InitDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dynamics: Option<DynamicsReport>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
    /// Every check from every stage, in the order they ran.
    pub verdicts: Vec<Check>,
    /// No verdict is `fail` and no error occurred.
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            convergence: None,
            init_diagnostics: None,
            dynamics: None,
            extra: serde_json::Map::new(),
            verdicts: Vec::new(),
            passed: true,
            error: None,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.verdicts.push(check);
        self.refresh();
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.verdicts.extend(checks);
        self.refresh();
    }

    pub fn fail_with(&mut self, error: impl std::fmt::Display) {
        self.error = Some(error.to_string());
        self.refresh();
    }

    pub fn verdict(&self, name: &str) -> Option<&Check> {
        self.verdicts.iter().find(|c| c.name == name)
    }

    fn refresh(&mut self) {
        self.passed = self.error.is_none() && !self.verdicts.iter().any(|c| c.verdict.is_failure());
    }

    pub fn write(&self, path: &Path) -> Result<(), WriteError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| write_err(path, e))?;
        fs::write(path, text + "\n").map_err(|e| write_err(path, e))
    }
}
