//! Append-only JSON-lines result logs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use wgs_core::minimize::RunRecord;
use wgs_core::models::Model;
use wgs_core::ParameterVector;

use crate::error::{CliError, CliResult};

/// One completed run at one parameter point. Every line is self-contained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub command: String,
    pub fingerprint: String,
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swept: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    pub energy: f64,
    pub evals: usize,
    pub provenance: String,
    #[serde(default)]
    pub observables: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<f64>,
    pub x: ParameterVector<f64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub elapsed_s: f64,
}

impl LogLine {
    pub fn from_record(command: &str, fingerprint: &str, record: &RunRecord, elapsed_s: f64) -> Self {
        LogLine {
            command: command.into(),
            fingerprint: fingerprint.into(),
            model: record.model,
            swept: None,
            round: None,
            energy: record.energy,
            evals: record.evals,
            provenance: record.provenance.clone(),
            observables: record.observables.clone(),
            diagnostic: None,
            x: record.x.clone(),
            timestamp: now(),
            elapsed_s,
        }
    }
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Appends lines and flushes them to disk.
pub fn append(path: &Path, lines: &[LogLine]) -> CliResult<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&serde_json::to_string(l).expect("log line serializes"));
        text.push('\n');
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    f.sync_data().map_err(|e| CliError::io(path, e))
}

/// Reads a log. A truncated final line (from an interrupted write) is
/// skipped; malformed lines elsewhere are errors.
pub fn read(path: &Path) -> CliResult<Vec<LogLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
}

pub fn parse(text: &str) -> Result<Vec<LogLine>, String> {
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(l) => out.push(l),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    Ok(out)
}
