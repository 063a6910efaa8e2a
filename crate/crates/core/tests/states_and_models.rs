use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wgs_core::gradients::energy_at;
use wgs_core::linalg::{kron, CMatrix};
use wgs_core::models::{
    compressibility, correlation_matrix, density, density_density, energy, mean_two_point, number, pauli, Model,
};
use wgs_core::oracle::{
    assembled_hamiltonian, build_state, cz_graph_state, embed_pair, embed_site, exact_ground, expectation_dense, overlap,
    site_average, textbook_hamiltonian, DEFAULT_DENSE_CAP, DEFAULT_STATE_CAP,
};
use wgs_core::rdm::PreparedState;
use wgs_core::varstate::{cayley, extend_superposition, pack, random_init, unitarity_defect, unpack};
use wgs_core::{Ansatz, Geometry, InitRanges, ParameterVector, PhaseMode, StateParts};

fn small_ranges() -> InitRanges {
    InitRanges::uniform(-1.0, 1.0)
}

fn prepared(a: &Ansatz, x: &ParameterVector<f64>) -> PreparedState<f64> {
    PreparedState::new(a, unpack(a, x).unwrap()).unwrap()
}

#[test]
fn trivial_parameters_give_plus_state() {
    for (g, n) in [(Geometry::ring(5).unwrap(), 2), (Geometry::torus(2, 3).unwrap(), 2), (Geometry::ring(4).unwrap(), 3)] {
        let a = Ansatz::new(g, PhaseMode::None, n, 1).unwrap();
        let x = pack(&a, &StateParts::<f64>::plus_state(&a)).unwrap();
        let psi = build_state(&a, &x, DEFAULT_STATE_CAP).unwrap();
        let amp = 1.0 / (psi.len() as f64).sqrt();
        let plus = psi.mapv(|_| Complex64::new(amp, 0.0));
        assert!((overlap(&plus, &psi).norm() - 1.0).abs() < 1e-12);
    }
}

fn cluster_overlap(l0: usize, l1: usize) -> f64 {
    let g = Geometry::new(&[l0, l1], &[false, false]).unwrap();
    let edges: Vec<(usize, usize)> = g.bonds().iter().map(|b| (b.a, b.b)).collect();
    let a = Ansatz::new(g, PhaseMode::None, 2, 1).unwrap();
    let mut parts = StateParts::<f64>::plus_state(&a);
    for &(p, q) in &edges {
        let r = a.phase_map().index(p, q).unwrap();
        parts.phases[r][[0, 0]] = PI;
    }
    let psi = build_state(&a, &pack(&a, &parts).unwrap(), DEFAULT_STATE_CAP).unwrap();
    let want = cz_graph_state::<f64>(l0 * l1, &edges).unwrap();
    overlap(&want, &psi).norm()
}

#[test]
fn nearest_neighbour_pi_phases_give_cluster_states() {
    assert!((cluster_overlap(2, 3) - 1.0).abs() < 1e-12);
    assert!((cluster_overlap(3, 3) - 1.0).abs() < 1e-12);
}

#[test]
fn bond_sums_reproduce_textbook_hamiltonians() {
    let cases = [
        (Geometry::ring(5).unwrap(), Model::Xy { b: 0.8, gamma: 0.3 }, 2),
        (Geometry::chain(5).unwrap(), Model::Xy { b: -0.4, gamma: 0.9 }, 2),
        (Geometry::torus(2, 3).unwrap(), Model::Xy { b: 1.3, gamma: -0.2 }, 2),
        (Geometry::torus(2, 2).unwrap(), Model::Xy { b: 0.5, gamma: 0.5 }, 2),
        (Geometry::ring(2).unwrap(), Model::ising(0.7), 2),
        (Geometry::ring(4).unwrap(), Model::BoseHubbard { j: 0.3, u: 1.2, mu: 0.7 }, 3),
        (Geometry::chain(3).unwrap(), Model::BoseHubbard { j: 0.1, u: 1.0, mu: 0.4 }, 4),
        (Geometry::torus(2, 2).unwrap(), Model::bose_hubbard(0.02, 0.5), 4),
    ];
    for (g, model, n) in cases {
        let hams = model.bond_hamiltonians::<f64>(&g, n).unwrap();
        let assembled = assembled_hamiltonian(&g, &hams, n, DEFAULT_DENSE_CAP).unwrap();
        let textbook = textbook_hamiltonian::<f64>(&g, &model, n, DEFAULT_DENSE_CAP).unwrap();
        let err = (&assembled - &textbook).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "{model:?} on {:?}: {err}", g.lengths());
    }
}

#[test]
fn single_bond_ising_spectrum() {
    let g = Geometry::chain(2).unwrap();
    assert!((exact_ground(&g, &Model::ising(0.0), 2).unwrap().energy + 1.0).abs() < 1e-12);
}

#[test]
fn bose_hubbard_without_hopping_is_diagonal() {
    for mu in [0.0, 0.4, 1.5, 2.7] {
        let g = Geometry::torus(2, 2).unwrap();
        let e = exact_ground(&g, &Model::bose_hubbard(0.0, mu), 4).unwrap().energy;
        let per_site = (0..4).map(|k| (k * (k - 1)) as f64 / 2.0 - mu * k as f64).fold(f64::INFINITY, f64::min);
        assert!((e - 4.0 * per_site).abs() < 1e-10, "mu={mu}");
    }
}

#[test]
fn ising_ring_of_eight_ground_energy() {
    // Value frozen from dense diagonalization; it coincides with the
    // free-fermion sum -Σ_k sqrt(1 + B² - 2B cos k), k = (2j+1)π/8.
    const FROZEN: f64 = -10.79526767237469;
    let b = 1.1f64;
    let free: f64 = -(0..8).map(|j| (1.0 + b * b - 2.0 * b * ((2 * j + 1) as f64 * PI / 8.0).cos()).sqrt()).sum::<f64>();
    let e0 = exact_ground(&Geometry::ring(8).unwrap(), &Model::ising(b), 2).unwrap();
    assert!((e0.energy - FROZEN).abs() < 1e-10, "{}", e0.energy);
    assert!((free - FROZEN).abs() < 1e-10);
    assert!(e0.residual < 1e-9);
}

#[test]
fn energies_match_dense_expectation_and_bound() {
    let cases = [
        (Geometry::ring(6).unwrap(), Model::Xy { b: 0.7, gamma: 0.4 }, 2, 2, PhaseMode::None),
        (Geometry::ring(6).unwrap(), Model::Xy { b: 0.7, gamma: 0.4 }, 2, 1, PhaseMode::Orbit),
        (Geometry::torus(2, 3).unwrap(), Model::ising(1.2), 2, 3, PhaseMode::Distance),
        (Geometry::ring(4).unwrap(), Model::bose_hubbard(0.1, 0.6), 3, 2, PhaseMode::None),
        (Geometry::torus(2, 2).unwrap(), Model::bose_hubbard(0.02, 0.5), 4, 1, PhaseMode::Orbit),
    ];
    for (k, (g, model, n, m, mode)) in cases.into_iter().enumerate() {
        let a = Ansatz::new(g.clone(), mode, n, m).unwrap();
        let hams = model.bond_hamiltonians::<f64>(&g, n).unwrap();
        let h = textbook_hamiltonian::<f64>(&g, &model, n, DEFAULT_DENSE_CAP).unwrap();
        let e0 = exact_ground(&g, &model, n).unwrap().energy;
        for seed in 0..4 {
            let x = random_init::<f64>(&a, 100 * k as u64 + seed, &small_ranges());
            let e = energy(&prepared(&a, &x), &hams).unwrap();
            let psi = build_state(&a, &x, DEFAULT_STATE_CAP).unwrap();
            let dense = expectation_dense(&psi, &h);
            assert!((e - dense.re).abs() <= 1e-10, "case {k}: {e} vs {}", dense.re);
            assert!(dense.im.abs() < 1e-10);
            assert!(e >= e0 - 1e-9);
        }
    }
}

#[test]
fn zero_hamiltonian_has_zero_energy() {
    let g = Geometry::ring(5).unwrap();
    let a = Ansatz::new(g.clone(), PhaseMode::Orbit, 3, 2).unwrap();
    let zero: Vec<CMatrix<f64>> = g.bonds().iter().map(|_| Array2::zeros((9, 9))).collect();
    let x = random_init::<f64>(&a, 1, &small_ranges());
    assert_eq!(energy(&prepared(&a, &x), &zero).unwrap(), 0.0);
}

#[test]
fn inert_new_branch_keeps_energy() {
    let g = Geometry::ring(5).unwrap();
    let model = Model::Xy { b: 0.3, gamma: 0.6 };
    let a = Ansatz::new(g.clone(), PhaseMode::Orbit, 2, 1).unwrap();
    let hams = model.bond_hamiltonians::<f64>(&g, 2).unwrap();
    let x = random_init::<f64>(&a, 4, &small_ranges());
    let (a2, x2) = extend_superposition(&a, &x, 9, 0.0, &InitRanges::default()).unwrap();
    assert_eq!(x2.len(), x.len() + 2 * 5 + 2);
    let e1 = energy_at(&a, &hams, &x.values).unwrap();
    let e2 = energy_at(&a2, &hams, &x2.values).unwrap();
    assert!((e1 - e2).abs() < 1e-12);
    let (_, again) = extend_superposition(&a, &x, 9, 0.0, &InitRanges::default()).unwrap();
    assert_eq!(again, x2);
}

#[test]
fn spin_observables_match_dense_state() {
    let g = Geometry::ring(6).unwrap();
    let a = Ansatz::new(g, PhaseMode::None, 2, 2).unwrap();
    let x = random_init::<f64>(&a, 21, &small_ranges());
    let s = prepared(&a, &x);
    let psi = build_state(&a, &x, DEFAULT_STATE_CAP).unwrap();
    for (i, j, d) in [(0, 0, 1isize), (0, 2, 2), (1, 1, 3), (2, 0, 5)] {
        let ours = mean_two_point(&s, i, j, &[d]).unwrap();
        let mut want = 0.0;
        for site in 0..6 {
            let other = (site as isize + d).rem_euclid(6) as usize;
            let joint = expectation_dense(&psi, &embed_pair(&kron(&pauli(i), &pauli(j)), site, other, 2, 6)).re;
            let ea = expectation_dense(&psi, &embed_site(&pauli(i), site, 2, 6)).re;
            let eb = expectation_dense(&psi, &embed_site(&pauli(j), other, 2, 6)).re;
            want += joint - ea * eb;
        }
        assert!((ours - want / 6.0).abs() < 1e-8);
    }
    let (c, sv) = correlation_matrix(&s, 1, 4).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let joint = expectation_dense(&psi, &embed_pair(&kron(&pauli(i), &pauli(j)), 1, 4, 2, 6)).re;
            let ea = expectation_dense(&psi, &embed_site(&pauli(i), 1, 2, 6)).re;
            let eb = expectation_dense(&psi, &embed_site(&pauli(j), 4, 2, 6)).re;
            assert!((c[[i, j]] - (joint - ea * eb)).abs() < 1e-8);
        }
    }
    assert!(sv >= 0.0);
}

#[test]
fn boson_observables_match_dense_state() {
    let g = Geometry::torus(2, 2).unwrap();
    let a = Ansatz::new(g, PhaseMode::None, 4, 2).unwrap();
    let x = random_init::<f64>(&a, 8, &small_ranges());
    let s = prepared(&a, &x);
    let psi = build_state(&a, &x, DEFAULT_STATE_CAP).unwrap();
    let num = number::<f64>(4);
    assert!((density(&s).unwrap() - site_average(&psi, &num, 4, 4).unwrap()).abs() < 1e-8);
    assert!((compressibility(&s).unwrap() - wgs_core::oracle::compressibility_dense(&psi, 4, 4).unwrap()).abs() < 1e-8);
    let (gamma, raw) = density_density(&s, &[0, 1]).unwrap();
    let nn = kron(&num, &num);
    let mut want = 0.0;
    for site in 0..4 {
        let other = a.geometry().translate(site, &[0, 1]).unwrap();
        want += expectation_dense(&psi, &embed_pair(&nn, site, other, 4, 4)).re;
    }
    want /= 4.0;
    assert!((raw - want).abs() < 1e-8);
    let rho = density(&s).unwrap();
    assert!((gamma - (raw - rho * rho)).abs() < 1e-12);
}

#[test]
fn cayley_is_unitary_for_random_generators() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [2usize, 3, 5] {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let mut gen = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
            for i in 0..n {
                gen[[i, i]] = Complex64::new(rng.random_range(-5.0..5.0), 0.0);
                for j in i + 1..n {
                    gen[[i, j]] = Complex64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                }
            }
            worst = worst.max(unitarity_defect(&cayley(&gen).unwrap()));
        }
        assert!(worst < 1e-12, "n={n}: {worst}");
    }
}

#[test]
fn two_level_cayley_matches_closed_form() {
    // Ã = diag(t, 0) gives A = diag(2t, 0) and U = diag((i+2t)/(i-2t), 1).
    let t = 0.37;
    let mut gen = Array2::from_elem((2, 2), Complex64::new(0.0, 0.0));
    gen[[0, 0]] = Complex64::new(t, 0.0);
    let u = cayley(&gen).unwrap();
    let i = Complex64::i();
    let want = (i + 2.0 * t) / (i - 2.0 * t);
    assert!((u[[0, 0]] - want).norm() < 1e-14);
    assert!((u[[1, 1]] - 1.0).norm() < 1e-14);
    assert!(u[[0, 1]].norm() < 1e-14 && u[[1, 0]].norm() < 1e-14);
}

#[test]
fn layout_length_matches_closed_form() {
    for n_sites in [2usize, 3, 5, 8] {
        for n in [2usize, 3, 5] {
            for m in 1..=3 {
                for (mode, symmetric) in [(PhaseMode::None, false), (PhaseMode::Orbit, true), (PhaseMode::Distance, true)] {
                    let a = Ansatz::new(Geometry::ring(n_sites).unwrap(), mode, n, m).unwrap();
                    let r = a.phase_map().count();
                    let per_phase = if symmetric { (n - 1) * n / 2 } else { (n - 1) * (n - 1) };
                    let k = r * per_phase + 2 * m * n_sites * (n - 1) + 2 * m + n_sites * n * n;
                    assert_eq!(a.layout().len(), k);
                    if mode == PhaseMode::None {
                        assert_eq!(r, n_sites * (n_sites - 1) / 2);
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_unpack_roundtrip(seed in any::<u64>(), n in 2usize..4, m in 1usize..4, sites in 3usize..7, orbit in any::<bool>()) {
        let mode = if orbit { PhaseMode::Orbit } else { PhaseMode::None };
        let a = Ansatz::new(Geometry::ring(sites).unwrap(), mode, n, m).unwrap();
        let x = random_init::<f64>(&a, seed, &InitRanges::default());
        let back = pack(&a, &unpack(&a, &x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn phase_gate_entries_are_unimodular(phases in proptest::collection::vec(-10.0f64..10.0, 4)) {
        let phi = Array2::from_shape_vec((2, 2), phases).unwrap();
        let w = wgs_core::varstate::phase_gate(&phi);
        for (k, z) in w.iter().enumerate() {
            let diagonal = k % 10 == 0;
            let ok = if diagonal { (z.norm() - 1.0).abs() < 1e-15 } else { *z == Complex64::new(0.0, 0.0) };
            prop_assert!(ok);
        }
    }
}
