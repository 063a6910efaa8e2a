use wgs_core::gradients::energy_at;
use wgs_core::minimize::{
    local_minimize, minimize_from, multistart, run_sweep, sweep_step, EnergyObjective, LocalSearchConfig, MultistartConfig,
    SweepConfig, SweepState,
};
use wgs_core::models::Model;
use wgs_core::oracle::exact_ground;
use wgs_core::varstate::random_init;
use wgs_core::{Ansatz, Geometry, InitRanges, PhaseMode};

fn ring_ansatz(n: usize, m: usize) -> Ansatz {
    Ansatz::new(Geometry::ring(n).unwrap(), PhaseMode::Orbit, 2, m).unwrap()
}

#[test]
fn four_site_ising_reaches_exact_ground_energy() {
    let model = Model::ising(0.0);
    let g = Geometry::ring(4).unwrap();
    let e0 = exact_ground(&g, &model, 2).unwrap().energy;
    assert!((e0 + 4.0).abs() < 1e-10, "exact ground energy {e0}");
    let a = ring_ansatz(4, 1);
    let obj = EnergyObjective::new(&a, &model).unwrap();
    let mut best = f64::INFINITY;
    for seed in 0..5 {
        let x0 = random_init::<f64>(&a, seed, &InitRanges::uniform(-1.0, 1.0));
        let r = local_minimize(&obj, &x0.values, &LocalSearchConfig::default()).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.energy <= r.trace[0]);
        assert!(r.energy >= e0 - 1e-9);
        best = best.min(r.energy);
    }
    assert!(best - e0 < 1e-6, "best {best} vs exact {e0}");
}

#[test]
fn single_trial_is_single_local_search() {
    let model = Model::ising(0.7);
    let base = ring_ansatz(4, 1);
    let cfg = MultistartConfig { trials: 1, max_branches: 1, seed: 11, ..Default::default() };
    let out = multistart(&base, &model, &cfg).unwrap();
    let x0 = random_init::<f64>(&base, wgs_core::minimize::derive_seed(11, 1, 0), &cfg.init);
    let obj = EnergyObjective::new(&base, &model).unwrap();
    let t = local_minimize(&obj, &x0.values, &cfg.trial_search).unwrap();
    let m = local_minimize(&obj, &t.x, &cfg.main_search).unwrap();
    assert_eq!(out.record.energy, m.energy.min(t.energy));
}

#[test]
fn multistart_is_bounded_reproducible_and_beats_trials() {
    let model = Model::ising(1.1);
    let g = Geometry::ring(8).unwrap();
    let e0 = exact_ground(&g, &model, 2).unwrap().energy;
    let base = ring_ansatz(8, 1);
    let cfg = MultistartConfig {
        trials: 4,
        trial_search: LocalSearchConfig::default().with_max_evals(150),
        main_search: LocalSearchConfig::default().with_max_evals(800),
        max_branches: 3,
        seed: 5,
        ..Default::default()
    };
    let a = multistart(&base, &model, &cfg).unwrap();
    let b = multistart(&base, &model, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.levels.len(), 3);
    for level in &a.levels {
        for e in level.trial_energies.iter().flatten() {
            assert!(a.record.energy <= *e);
        }
    }
    for h in &a.record.history {
        assert!(h.energy >= e0 - 1e-9, "{} below exact {e0}", h.energy);
    }
    let acc = a.record.accepted_energies();
    assert!(acc.windows(2).all(|w| w[1] < w[0]));
    // The stored vector reproduces the stored energy.
    let ansatz = base.with_branches(a.record.x.header.branches).unwrap();
    let hams = model.bond_hamiltonians(ansatz.geometry(), 2).unwrap();
    let e = energy_at(&ansatz, &hams, &a.record.x.values).unwrap();
    assert!((e - a.record.energy).abs() < 1e-12);
}

fn small_sweep() -> (Ansatz, Model, SweepConfig) {
    let base = ring_ansatz(6, 1);
    let values: Vec<f64> = (0..7).map(|i| 0.7 + 0.1 * i as f64).collect();
    let mut cfg = SweepConfig::new("b", values);
    cfg.initial.trials = 2;
    cfg.initial.trial_search = LocalSearchConfig::default().with_max_evals(60);
    cfg.initial.main_search = LocalSearchConfig::default().with_max_evals(120);
    cfg.search = LocalSearchConfig::default().with_max_evals(150);
    cfg.rounds = 2;
    (base, Model::ising(1.0), cfg)
}

#[test]
fn sweep_records_only_improve_and_respect_bound() {
    let (base, model, cfg) = small_sweep();
    let s = run_sweep(&base, &model, &cfg, None, "test").unwrap();
    assert_eq!(s.rounds_done, 2);
    assert_eq!(s.round_energies.len(), 3);
    for w in s.round_energies.windows(2) {
        for (before, after) in w[0].iter().zip(&w[1]) {
            assert!(after <= before);
        }
    }
    for p in &s.points {
        assert_eq!(p.record.model, model.with_parameter("b", p.value).unwrap());
        let e0 = exact_ground(base.geometry(), &p.record.model, 2).unwrap().energy;
        for h in &p.record.history {
            assert!(h.energy >= e0 - 1e-9);
        }
        assert!(p.record.observables.contains_key("max_corr_sv"));
    }
}

#[test]
fn sweep_resume_matches_uninterrupted_run() {
    let (base, model, cfg) = small_sweep();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let full = run_sweep(&base, &model, &cfg, None, "fp").unwrap();
    let one = SweepConfig { rounds: 1, ..cfg.clone() };
    let partial = run_sweep(&base, &model, &one, Some(&path), "fp").unwrap();
    assert_eq!(partial.rounds_done, 1);
    assert_eq!(SweepState::load(&path).unwrap(), partial);
    let resumed = run_sweep(&base, &model, &cfg, Some(&path), "fp").unwrap();
    assert_eq!(resumed, full);
    assert!(run_sweep(&base, &model, &cfg, Some(&path), "other").is_err());
}

#[test]
fn flat_diagnostics_give_empty_queue() {
    let (base, model, mut cfg) = small_sweep();
    cfg.neighbour_pass = false;
    let mut s = run_sweep(&base, &model, &SweepConfig { rounds: 0, ..cfg.clone() }, None, "x").unwrap();
    // Replace every record's energy by a linear function: nothing to repair.
    for p in s.points.iter_mut() {
        p.record.energy = -2.0 * p.value;
    }
    s.refresh(&cfg).unwrap();
    assert!(s.queue.is_empty());
    let before = s.clone();
    assert_eq!(sweep_step(&mut s, &base, &model, &cfg).unwrap(), 0);
    assert_eq!(s.points, before.points);
}

#[test]
fn warm_start_changes_branch_count_with_source() {
    let base = ring_ansatz(4, 1);
    let two = base.with_branches(2).unwrap();
    let x0 = random_init::<f64>(&two, 3, &InitRanges::uniform(-1.0, 1.0));
    let (a, r) = minimize_from(&base, &Model::ising(0.5), &x0, &LocalSearchConfig::default().with_max_evals(50)).unwrap();
    assert_eq!(a.branches(), 2);
    assert_eq!(r.x.len(), two.layout().len());
}
