//! The `verify` subcommand: engine-versus-oracle agreement, gradient checks
//! and invariants on randomized small instances.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wgs_core::gradients::{energy_and_gradient, energy_at};
use wgs_core::linalg::CMatrix;
use wgs_core::models::{energy, Model};
use wgs_core::oracle::{brute_rdm, build_state, exact_ground, expectation_dense, textbook_hamiltonian, DEFAULT_DENSE_CAP};
use wgs_core::rdm::PreparedState;
use wgs_core::varstate::{cayley, random_init, unitarity_defect};
use wgs_core::verify::{check_gradient, FdConfig};
use wgs_core::{Ansatz, Geometry, InitRanges, PhaseMode, WgsError};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub seed: u64,
    pub rdm_instances: usize,
    pub gradient_instances: usize,
    pub energy_instances: usize,
    pub unitary_samples: usize,
    /// Largest lattice used by the randomized checks.
    pub max_sites: usize,
    /// Largest state-vector dimension the oracle may build.
    pub state_cap: usize,
    #[serde(skip)]
    pub inject_phase_sign_error: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            seed: 0,
            rdm_instances: 40,
            gradient_instances: 20,
            energy_instances: 12,
            unitary_samples: 300,
            max_sites: 6,
            state_cap: 1 << 16,
            inject_phase_sign_error: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

fn mode_for(k: usize) -> PhaseMode {
    match k % 4 {
        0 => PhaseMode::None,
        1 => PhaseMode::Orbit,
        2 => PhaseMode::Distance,
        _ => PhaseMode::Cutoff { max_distance: 1 },
    }
}

fn check(name: &str, instances: usize, max_error: f64, tolerance: f64) -> CheckReport {
    CheckReport { name: name.into(), instances, max_error, tolerance, passed: max_error <= tolerance }
}

fn max_diff(a: &CMatrix<f64>, b: &CMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn rdm_check(spec: &VerifySpec) -> CliResult<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0bad_cafe);
    let mut worst = 0.0f64;
    for k in 0..spec.rdm_instances {
        let levels = rng.random_range(2..=3usize);
        let n_sites = rng.random_range(3..=spec.max_sites);
        let branches = rng.random_range(1..=3);
        let a = Ansatz::new(Geometry::ring(n_sites)?, mode_for(k), levels, branches)?;
        let x = random_init::<f64>(&a, rng.random(), &InitRanges::uniform(-1.5, 1.5));
        let q = rng.random_range(1..=3usize.min(n_sites));
        let mut sites: Vec<usize> = Vec::new();
        while sites.len() < q {
            let s = rng.random_range(0..n_sites);
            if !sites.contains(&s) {
                sites.push(s);
            }
        }
        let psi = build_state(&a, &x, spec.state_cap)?;
        let want = brute_rdm(&psi, levels, n_sites, &sites)?;
        let got = PreparedState::from_vector(&a, &x)?.rdm(&sites)?;
        worst = worst.max(max_diff(&got, &want));
    }
    Ok(check("rdm_vs_partial_trace", spec.rdm_instances, worst, 1e-10))
}

fn gradient_instance(rng: &mut ChaCha8Rng, k: usize, max_sites: usize) -> CliResult<(Ansatz, Model)> {
    let branches = 1 + k % 3;
    let (levels, model) = match k % 3 {
        0 => (2, Model::Xy { b: rng.random_range(-1.5..1.5), gamma: rng.random_range(-1.0..1.0) }),
        1 => (3, Model::BoseHubbard { j: rng.random_range(0.01..0.3), u: 1.0, mu: rng.random_range(0.0..2.0) }),
        _ => (5, Model::bose_hubbard(rng.random_range(0.01..0.1), rng.random_range(0.0..3.0))),
    };
    let top = if levels == 5 { max_sites.min(4) } else { max_sites };
    let n_sites = rng.random_range(3..=top.max(3));
    let mode = match k % 4 {
        3 => PhaseMode::Cutoff { max_distance: 1 },
        other => mode_for(other),
    };
    Ok((Ansatz::new(Geometry::ring(n_sites)?, mode, levels, branches)?, model))
}

/// Finite-difference check of the analytic gradient. With
/// `inject_phase_sign_error` the phase block of the analytic gradient is
/// negated first, which the check must detect.
fn gradient_check(spec: &VerifySpec) -> CliResult<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    let cfg = FdConfig::default();
    for k in 0..spec.gradient_instances {
        let (a, model) = gradient_instance(&mut rng, k, spec.max_sites)?;
        let hams = model.bond_hamiltonians::<f64>(a.geometry(), a.levels())?;
        let x = random_init::<f64>(&a, rng.random(), &InitRanges::uniform(-1.0, 1.0));
        let (_, mut g) = energy_and_gradient(&a, &hams, &x.values)?;
        if spec.inject_phase_sign_error {
            for i in a.layout().phases {
                g[i] = -g[i];
            }
        }
        let f = |v: &[f64]| energy_at(&a, &hams, v);
        let r = check_gradient(&f, &x.values, &g, &cfg)?;
        worst = worst.max(r.max_rel_error);
        if !r.passed() {
            failures += 1;
        }
    }
    let mut c = check("gradient_vs_finite_differences", spec.gradient_instances, worst, cfg.rel_tol);
    c.passed = failures == 0;
    Ok(c)
}

fn energy_checks(spec: &VerifySpec) -> CliResult<(CheckReport, CheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5151);
    let mut dense_err = 0.0f64;
    let mut bound_violation = 0.0f64;
    for k in 0..spec.energy_instances {
        let (a, model) = gradient_instance(&mut rng, k, spec.max_sites)?;
        let g = a.geometry();
        let n = a.levels();
        let h = textbook_hamiltonian::<f64>(g, &model, n, DEFAULT_DENSE_CAP)?;
        let e0 = exact_ground(g, &model, n)?.energy;
        let hams = model.bond_hamiltonians::<f64>(g, n)?;
        let x = random_init::<f64>(&a, rng.random(), &InitRanges::uniform(-1.0, 1.0));
        let e = energy(&PreparedState::from_vector(&a, &x)?, &hams)?;
        let psi = build_state(&a, &x, spec.state_cap)?;
        dense_err = dense_err.max((e - expectation_dense(&psi, &h).re).abs());
        bound_violation = bound_violation.max(e0 - e);
    }
    Ok((
        check("energy_vs_dense_expectation", spec.energy_instances, dense_err, 1e-10),
        check("variational_bound", spec.energy_instances, bound_violation.max(0.0), 1e-9),
    ))
}

fn unitarity_check(spec: &VerifySpec) -> CliResult<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7777);
    let mut worst = 0.0f64;
    for n in [2usize, 3, 5] {
        for _ in 0..spec.unitary_samples {
            let mut gen = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
            for i in 0..n {
                gen[[i, i]] = Complex64::new(rng.random_range(-5.0..5.0), 0.0);
                for j in i + 1..n {
                    gen[[i, j]] = Complex64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                }
            }
            worst = worst.max(unitarity_defect(&cayley(&gen)?));
        }
    }
    Ok(check("cayley_unitarity", 3 * spec.unitary_samples, worst, 1e-12))
}

pub fn run_suite(spec: &VerifySpec) -> CliResult<VerifyReport> {
    if spec.max_sites < 3 {
        return Err(CliError::Config("max_sites must be at least 3".into()));
    }
    // The largest oracle state has 3 levels on max_sites sites.
    let dim = 3usize.checked_pow(spec.max_sites as u32).unwrap_or(usize::MAX);
    if dim > spec.state_cap {
        return Err(WgsError::CapExceeded { dim, cap: spec.state_cap }.into());
    }
    let (dense, bound) = energy_checks(spec)?;
    let checks = vec![rdm_check(spec)?, gradient_check(spec)?, dense, bound, unitarity_check(spec)?];
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { seed: spec.seed, checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifySpec {
        VerifySpec {
            rdm_instances: 6,
            gradient_instances: 4,
            energy_instances: 3,
            unitary_samples: 20,
            max_sites: 4,
            ..Default::default()
        }
    }

    #[test]
    fn clean_build_passes_and_is_deterministic() {
        let a = run_suite(&small()).unwrap();
        assert!(a.passed, "{a:?}");
        assert_eq!(a, run_suite(&small()).unwrap());
    }

    #[test]
    fn injected_sign_error_is_caught() {
        let spec = VerifySpec { inject_phase_sign_error: true, ..small() };
        let r = run_suite(&spec).unwrap();
        let g = r.checks.iter().find(|c| c.name == "gradient_vs_finite_differences").unwrap();
        assert!(!g.passed);
        assert!(!r.passed);
    }

    #[test]
    fn oversized_request_is_refused() {
        let spec = VerifySpec { max_sites: 12, state_cap: 1 << 12, ..small() };
        assert_eq!(run_suite(&spec).unwrap_err().exit_code(), 4);
    }
}
