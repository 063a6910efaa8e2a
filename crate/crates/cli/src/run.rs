//! The `run`, `multistart` and `sweep` subcommands.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use wgs_core::minimize::{multistart, run_sweep, MultistartOutcome, RunRecord, SweepState};
use wgs_core::models::snapshot;
use wgs_core::rdm::PreparedState;
use wgs_core::varstate::unpack;
use wgs_core::Ansatz;

use crate::config::{Built, RunConfig};
use crate::error::{CliError, CliResult};
use crate::logfile::{self, LogLine};

/// Fills the observable snapshot of a record.
pub fn observe(base: &Ansatz, record: &mut RunRecord) -> CliResult<()> {
    let ansatz = base.with_branches(record.x.header.branches)?;
    let state = PreparedState::new(&ansatz, unpack(&ansatz, &record.x)?)?;
    record.observables = snapshot(&state, &record.model)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub fingerprint: String,
    pub energy: f64,
    pub branches: usize,
    pub evals: usize,
    pub provenance: String,
    pub observables: std::collections::BTreeMap<String, f64>,
}

/// One multistart search at the configured parameter point.
pub fn cmd_run(cfg: &RunConfig, built: &Built, command: &str, log: Option<&Path>) -> CliResult<MultistartOutcome> {
    let fingerprint = cfg.fingerprint();
    let start = Instant::now();
    let mut out = multistart(&built.ansatz, &built.model, &cfg.search)?;
    observe(&built.ansatz, &mut out.record)?;
    if let Some(p) = log {
        let line = LogLine::from_record(command, &fingerprint, &out.record, start.elapsed().as_secs_f64());
        logfile::append(p, &[line])?;
    }
    Ok(out)
}

pub fn summary(cfg: &RunConfig, record: &RunRecord) -> RunSummary {
    RunSummary {
        fingerprint: cfg.fingerprint(),
        energy: record.energy,
        branches: record.x.header.branches,
        evals: record.evals,
        provenance: record.provenance.clone(),
        observables: record.observables.clone(),
    }
}

/// Runs or resumes the configured sweep; logs one line per point.
pub fn cmd_sweep(cfg: &RunConfig, built: &Built, log: Option<&Path>, checkpoint: Option<&Path>) -> CliResult<SweepState> {
    let sweep = built.sweep.as_ref().ok_or_else(|| CliError::Config("the configuration has no `sweep` section".into()))?;
    let fingerprint = cfg.fingerprint();
    let start = Instant::now();
    let state = run_sweep(&built.ansatz, &built.model, sweep, checkpoint, &fingerprint)?;
    if let Some(p) = log {
        let elapsed = start.elapsed().as_secs_f64();
        let lines: Vec<LogLine> = state
            .points
            .iter()
            .zip(&state.diagnostics)
            .map(|(pt, d)| {
                let mut l = LogLine::from_record("sweep", &fingerprint, &pt.record, elapsed);
                l.swept = Some(state.parameter.clone());
                l.round = Some(state.rounds_done);
                l.diagnostic = Some(d.value);
                l
            })
            .collect();
        logfile::append(p, &lines)?;
    }
    Ok(state)
}
