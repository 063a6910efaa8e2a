//! Sweeps along one Hamiltonian parameter, repairing badly converged points
//! by warm starts from better neighbours.
//!
//! Convergence quality is judged from the second divided difference of the
//! energy along the swept axis: a point stuck in a poor minimum shows up as a
//! dip flanked by two peaks.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::LocalSearchConfig;
use super::multistart::{derive_seed, minimize_from, multistart, MultistartConfig};
use super::registry::{registry_update, Candidate, RunRecord};
use crate::error::{Result, WgsError};
use crate::models::{snapshot, Model};
use crate::rdm::PreparedState;
use crate::varstate::{unpack, Ansatz, ParameterVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Name of the swept model parameter, e.g. `"b"` or `"mu"`.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Per-point search used to seed the sweep.
    #[serde(default = "sweep_multistart")]
    pub initial: MultistartConfig,
    /// Search used for warm-started jobs.
    #[serde(default)]
    pub search: LocalSearchConfig,
    #[serde(default = "three")]
    pub rounds: usize,
    /// Peaks and dips lie more than `k_mad` median absolute deviations from the median.
    #[serde(default = "three_f")]
    pub k_mad: f64,
    /// Lower bound on the peak threshold relative to `max|E| / h_min²`.
    #[serde(default = "floor")]
    pub relative_floor: f64,
    /// Also run a forward and a backward neighbour pass every round.
    #[serde(default = "yes")]
    pub neighbour_pass: bool,
    /// Insert a midpoint when a warm start fails to improve its target.
    #[serde(default)]
    pub insert_midpoints: bool,
    #[serde(default = "max_points")]
    pub max_points: usize,
    /// Stop early once a round lowers the summed energy by no more than this.
    #[serde(default)]
    pub min_improvement: Option<f64>,
}

fn sweep_multistart() -> MultistartConfig {
    MultistartConfig { max_branches: 1, ..Default::default() }
}

fn three() -> usize {
    3
}

fn three_f() -> f64 {
    3.0
}

fn floor() -> f64 {
    1e-9
}

fn yes() -> bool {
    true
}

fn max_points() -> usize {
    200
}

impl SweepConfig {
    pub fn new(parameter: &str, values: Vec<f64>) -> Self {
        SweepConfig {
            parameter: parameter.into(),
            values,
            initial: sweep_multistart(),
            search: LocalSearchConfig::default(),
            rounds: three(),
            k_mad: three_f(),
            relative_floor: floor(),
            neighbour_pass: true,
            insert_midpoints: false,
            max_points: max_points(),
            min_improvement: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 3 {
            return Err(WgsError::InvalidArgument("a sweep needs at least 3 points".into()));
        }
        check_ordered(&self.values)?;
        if !(self.k_mad > 0.0) || !(self.relative_floor >= 0.0) {
            return Err(WgsError::InvalidArgument("k_mad must be positive and relative_floor non-negative".into()));
        }
        self.initial.validate()?;
        self.search.validate()
    }
}

fn check_ordered(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(WgsError::InvalidArgument("sweep values must be finite".into()));
    }
    if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
        return Err(WgsError::InvalidArgument(format!(
            "sweep values must be strictly increasing and distinct, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub value: f64,
    /// Endpoints reuse the stencil of their only neighbour.
    pub low_confidence: bool,
}

/// Second divided difference of `energies` over the strictly increasing
/// abscissae `xs`.
pub fn sweep_diagnostic(xs: &[f64], energies: &[f64]) -> Result<Vec<Diagnostic>> {
    if xs.len() != energies.len() {
        return Err(WgsError::Shape(format!("{} abscissae, {} energies", xs.len(), energies.len())));
    }
    if xs.len() < 3 {
        return Err(WgsError::InvalidArgument("the diagnostic needs at least 3 points".into()));
    }
    check_ordered(xs)?;
    let n = xs.len();
    let stencil = |i: usize| {
        let h1 = xs[i] - xs[i - 1];
        let h2 = xs[i + 1] - xs[i];
        2.0 * ((energies[i + 1] - energies[i]) / h2 - (energies[i] - energies[i - 1]) / h1) / (h1 + h2)
    };
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                Diagnostic { value: stencil(1), low_confidence: true }
            } else if i == n - 1 {
                Diagnostic { value: stencil(n - 2), low_confidence: true }
            } else {
                Diagnostic { value: stencil(i), low_confidence: false }
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// Warm start from a peak into a neighbour.
    Peak,
    /// Re-minimization of a dip from its better neighbour.
    Dip,
    Neighbour,
    Midpoint,
}

/// Warm-started minimization of `target` from `source`'s parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub target: usize,
    pub source: usize,
    pub kind: JobKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobLog {
    pub round: usize,
    pub kind: JobKind,
    pub target_value: f64,
    pub source_value: f64,
    pub before: Option<f64>,
    pub after: Option<f64>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub record: RunRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepState {
    pub parameter: String,
    /// Identifies the configuration that produced this state.
    pub fingerprint: String,
    pub points: Vec<SweepPoint>,
    pub diagnostics: Vec<Diagnostic>,
    pub queue: Vec<Job>,
    pub rounds_done: usize,
    /// Point energies after the initial searches and after every round.
    pub round_energies: Vec<Vec<f64>>,
    pub log: Vec<JobLog>,
    /// Set when a round fell below the improvement threshold.
    #[serde(default)]
    pub stalled: bool,
}

impl SweepState {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.record.energy).collect()
    }

    /// Recomputes the diagnostics and the job queue.
    pub fn refresh(&mut self, cfg: &SweepConfig) -> Result<()> {
        check_ordered(&self.values())?;
        self.diagnostics = sweep_diagnostic(&self.values(), &self.energies())?;
        self.queue = plan_jobs(&self.diagnostics, self.threshold_floor(cfg), cfg.k_mad);
        Ok(())
    }

    /// Summed energy decrease of existing points accepted in `round`.
    pub fn round_improvement(&self, round: usize) -> f64 {
        self.log
            .iter()
            .filter(|l| l.round == round && l.accepted)
            .filter_map(|l| Some(l.before? - l.after?))
            .sum()
    }

    fn threshold_floor(&self, cfg: &SweepConfig) -> f64 {
        let xs = self.values();
        let h = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let scale = self.energies().iter().fold(1.0f64, |m, e| m.max(e.abs()));
        cfg.relative_floor * scale / (h * h)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| WgsError::InvalidArgument(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| WgsError::InvalidArgument(format!("writing {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path).map_err(|e| WgsError::InvalidArgument(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WgsError::InvalidArgument(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| WgsError::InvalidArgument(format!("parsing {}: {e}", path.display())))
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Jobs implied by the diagnostics. Only interior points can be peaks or
/// dips. A peak warm-starts its neighbours, or only the clearly worse one
/// when their diagnostics differ by more than the threshold; a dip is redone
/// from its higher neighbour. One job per target survives, the one whose
/// source has the highest diagnostic.
pub fn plan_jobs(diag: &[Diagnostic], floor: f64, k_mad: f64) -> Vec<Job> {
    let interior: Vec<usize> = (0..diag.len()).filter(|&i| !diag[i].low_confidence).collect();
    if interior.is_empty() {
        return Vec::new();
    }
    let mut vals: Vec<f64> = interior.iter().map(|&i| diag[i].value).collect();
    let med = median(&mut vals);
    let mut dev: Vec<f64> = interior.iter().map(|&i| (diag[i].value - med).abs()).collect();
    let mad = median(&mut dev);
    let thr = (k_mad * mad).max(floor);
    let d = |i: usize| diag[i].value;
    let mut jobs = Vec::new();
    for &i in &interior {
        if d(i) > med + thr {
            let (l, r) = (i - 1, i + 1);
            if (d(l) - d(r)).abs() > thr {
                let worse = if d(l) < d(r) { l } else { r };
                jobs.push(Job { target: worse, source: i, kind: JobKind::Peak });
            } else {
                jobs.push(Job { target: l, source: i, kind: JobKind::Peak });
                jobs.push(Job { target: r, source: i, kind: JobKind::Peak });
            }
        } else if d(i) < med - thr {
            let source = if d(i + 1) > d(i - 1) { i + 1 } else { i - 1 };
            jobs.push(Job { target: i, source, kind: JobKind::Dip });
        }
    }
    let mut best: Vec<Option<Job>> = vec![None; diag.len()];
    for j in jobs {
        let slot = &mut best[j.target];
        let better = match slot {
            None => true,
            Some(o) => d(j.source) > d(o.source) || (d(j.source) == d(o.source) && j.source < o.source),
        };
        if better {
            *slot = Some(j);
        }
    }
    best.into_iter().flatten().collect()
}

struct JobResult {
    log: JobLog,
    candidate: Option<Candidate>,
}

fn run_job(base: &Ansatz, model: &Model, cfg: &SweepConfig, state: &SweepState, job: Job, target_value: f64, round: usize) -> JobResult {
    let src = &state.points[job.source];
    let before = state.points.get(job.target).filter(|_| job.kind != JobKind::Midpoint).map(|p| p.record.energy);
    let mut log = JobLog {
        round,
        kind: job.kind,
        target_value,
        source_value: src.value,
        before,
        after: None,
        accepted: false,
    };
    let outcome = model
        .with_parameter(&cfg.parameter, target_value)
        .and_then(|m| minimize_from(base, &m, &src.record.x, &cfg.search));
    let candidate = outcome.ok().map(|(ansatz, r)| {
        log.after = Some(r.energy);
        Candidate {
            energy: r.energy,
            x: ParameterVector { header: ansatz.header(), values: r.x },
            evals: r.evals,
            provenance: format!("round={round} {:?} from {}={}", job.kind, cfg.parameter, src.value).to_lowercase(),
        }
    });
    JobResult { log, candidate }
}

fn apply(state: &mut SweepState, model: &Model, cfg: &SweepConfig, target: usize, mut res: JobResult) -> Result<bool> {
    let Some(c) = res.candidate else {
        state.log.push(res.log);
        return Ok(false);
    };
    let point_model = model.with_parameter(&cfg.parameter, state.points[target].value)?;
    let accepted = registry_update(&mut state.points[target].record, &point_model, c)?;
    res.log.accepted = accepted;
    state.log.push(res.log);
    Ok(accepted)
}

/// One sweeping round: diagnostic-driven jobs run concurrently and are
/// applied in queue order, then the optional neighbour passes and midpoint
/// insertions. Returns the number of accepted updates.
pub fn sweep_step(state: &mut SweepState, base: &Ansatz, model: &Model, cfg: &SweepConfig) -> Result<usize> {
    state.refresh(cfg)?;
    let round = state.rounds_done + 1;
    let queue = state.queue.clone();
    let snapshot_state = &*state;
    let results: Vec<JobResult> = queue
        .par_iter()
        .map(|&job| run_job(base, model, cfg, snapshot_state, job, snapshot_state.points[job.target].value, round))
        .collect();
    let mut accepted = 0;
    let mut failed = Vec::new();
    for (job, res) in queue.iter().zip(results) {
        if apply(state, model, cfg, job.target, res)? {
            accepted += 1;
        } else {
            failed.push(*job);
        }
    }
    if cfg.neighbour_pass {
        let n = state.points.len();
        let order = (1..n).map(|i| (i, i - 1)).chain((0..n - 1).rev().map(|i| (i, i + 1)));
        for (target, source) in order {
            let job = Job { target, source, kind: JobKind::Neighbour };
            let res = run_job(base, model, cfg, state, job, state.points[target].value, round);
            if apply(state, model, cfg, target, res)? {
                accepted += 1;
            }
        }
    }
    if cfg.insert_midpoints {
        // Insert from the highest index down so earlier indices stay valid.
        let mut gaps: Vec<(usize, usize)> = failed
            .iter()
            .filter(|j| j.target.abs_diff(j.source) == 1)
            .map(|j| (j.target.min(j.source), j.source))
            .collect();
        gaps.sort();
        gaps.dedup_by_key(|g| g.0);
        for &(lo, source) in gaps.iter().rev() {
            if state.points.len() >= cfg.max_points {
                break;
            }
            let mid = 0.5 * (state.points[lo].value + state.points[lo + 1].value);
            let job = Job { target: lo + 1, source, kind: JobKind::Midpoint };
            let res = run_job(base, model, cfg, state, job, mid, round);
            if let Some(c) = res.candidate {
                let m = model.with_parameter(&cfg.parameter, mid)?;
                let mut log = res.log;
                log.accepted = true;
                state.log.push(log);
                state.points.insert(lo + 1, SweepPoint { value: mid, record: RunRecord::new(m, c) });
                accepted += 1;
            } else {
                state.log.push(res.log);
            }
        }
    }
    state.rounds_done = round;
    refresh_observables(state, base)?;
    state.refresh(cfg)?;
    state.round_energies.push(state.energies());
    Ok(accepted)
}

/// Fills the observable snapshot of every record that lacks one.
pub fn refresh_observables(state: &mut SweepState, base: &Ansatz) -> Result<()> {
    state.points.par_iter_mut().try_for_each(|p| {
        if !p.record.observables.is_empty() {
            return Ok(());
        }
        let ansatz = base.with_branches(p.record.x.header.branches)?;
        let prepared = PreparedState::new(&ansatz, unpack(&ansatz, &p.record.x)?)?;
        p.record.observables = snapshot(&prepared, &p.record.model)?;
        Ok(())
    })
}

/// Independent multistart searches at every sweep value.
pub fn initial_state(base: &Ansatz, model: &Model, cfg: &SweepConfig, fingerprint: &str) -> Result<SweepState> {
    cfg.validate()?;
    let points = cfg
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let m = model.with_parameter(&cfg.parameter, v)?;
            let ms = MultistartConfig { seed: derive_seed(cfg.initial.seed, i as u64, 0x5eed), ..cfg.initial.clone() };
            let out = multistart(base, &m, &ms)?;
            Ok(SweepPoint { value: v, record: out.record })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state = SweepState {
        parameter: cfg.parameter.clone(),
        fingerprint: fingerprint.into(),
        points,
        diagnostics: Vec::new(),
        queue: Vec::new(),
        rounds_done: 0,
        round_energies: Vec::new(),
        log: Vec::new(),
        stalled: false,
    };
    refresh_observables(&mut state, base)?;
    state.refresh(cfg)?;
    state.round_energies.push(state.energies());
    Ok(state)
}

/// Runs or resumes a sweep. With a checkpoint path the state is written
/// after the initial searches and after every round; an existing checkpoint
/// with the same fingerprint is resumed, one with another fingerprint is an
/// error.
pub fn run_sweep(base: &Ansatz, model: &Model, cfg: &SweepConfig, checkpoint: Option<&Path>, fingerprint: &str) -> Result<SweepState> {
    cfg.validate()?;
    let mut state = match checkpoint.filter(|p| p.exists()) {
        Some(p) => {
            let s = SweepState::load(p)?;
            if s.fingerprint != fingerprint {
                return Err(WgsError::InvalidArgument(format!(
                    "checkpoint {} belongs to another configuration",
                    p.display()
                )));
            }
            s
        }
        None => {
            let s = initial_state(base, model, cfg, fingerprint)?;
            if let Some(p) = checkpoint {
                s.save(p)?;
            }
            s
        }
    };
    while state.rounds_done < cfg.rounds && !state.stalled {
        sweep_step(&mut state, base, model, cfg)?;
        if let Some(t) = cfg.min_improvement {
            state.stalled = state.round_improvement(state.rounds_done) <= t;
        }
        if let Some(p) = checkpoint {
            state.save(p)?;
        }
    }
    Ok(state)
}
