//! The `bench` subcommand: timing of reduced density matrices and full
//! gradients against lattice size.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use wgs_core::gradients::grad_energy;
use wgs_core::models::Model;
use wgs_core::rdm::PreparedState;
use wgs_core::varstate::random_init;
use wgs_core::{Ansatz, Geometry, InitRanges, PhaseMode};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    /// Ring sizes for the per-bond density-matrix timing.
    pub sizes: Vec<usize>,
    /// Ring sizes for the full-gradient timing.
    pub gradient_sizes: Vec<usize>,
    pub levels: usize,
    pub branches: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec { sizes: vec![200, 400], gradient_sizes: vec![25, 50], levels: 5, branches: 1, repeats: 5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub task: String,
    pub sites: usize,
    pub levels: usize,
    pub branches: usize,
    pub repeats: usize,
    pub median_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn state(spec: &BenchSpec, sites: usize) -> CliResult<PreparedState<f64>> {
    let a = Ansatz::new(Geometry::ring(sites)?, PhaseMode::Orbit, spec.levels, spec.branches)?;
    let x = random_init::<f64>(&a, spec.seed, &InitRanges::uniform(-1.0, 1.0));
    Ok(PreparedState::from_vector(&a, &x)?)
}

/// Median time of one nearest-neighbour density matrix on a ring.
pub fn time_rdm(spec: &BenchSpec, sites: usize) -> CliResult<f64> {
    let s = state(spec, sites)?;
    s.rdm(&[0, 1])?;
    let times = (0..spec.repeats)
        .map(|_| {
            let t = Instant::now();
            let r = s.rdm(&[0, 1]);
            let dt = t.elapsed().as_secs_f64();
            r.map(|_| dt)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(median(times))
}

/// Median time of energy plus full gradient on a ring.
pub fn time_gradient(spec: &BenchSpec, sites: usize) -> CliResult<f64> {
    let s = state(spec, sites)?;
    let model = if spec.levels == 2 { Model::ising(1.0) } else { Model::bose_hubbard(0.05, 0.5) };
    let hams = model.bond_hamiltonians::<f64>(s.ansatz().geometry(), spec.levels)?;
    let times = (0..spec.repeats)
        .map(|_| {
            let t = Instant::now();
            let r = grad_energy(&s, &hams);
            let dt = t.elapsed().as_secs_f64();
            r.map(|_| dt)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(median(times))
}

pub fn run_bench(spec: &BenchSpec) -> CliResult<Vec<BenchRow>> {
    if spec.sizes.iter().chain(&spec.gradient_sizes).any(|&n| n < 3) {
        return Err(CliError::Config("benchmark rings need at least 3 sites".into()));
    }
    if spec.repeats == 0 || spec.branches == 0 || spec.levels < 2 {
        return Err(CliError::Config("repeats and branches must be positive and levels at least 2".into()));
    }
    let row = |task: &str, sites, median_s| BenchRow {
        task: task.into(),
        sites,
        levels: spec.levels,
        branches: spec.branches,
        repeats: spec.repeats,
        median_s,
    };
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        rows.push(row("rdm_per_bond", n, time_rdm(spec, n)?));
    }
    for &n in &spec.gradient_sizes {
        rows.push(row("gradient", n, time_gradient(spec, n)?));
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["task", "sites", "levels", "branches", "repeats", "median_s"]).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
