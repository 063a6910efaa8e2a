//! Brute-force references: full state vectors, partial traces and dense
//! exact diagonalization. Nothing here is shared with the polynomial-time
//! evaluation path.
//!
//! Basis states are ordered with site 0 as the most significant digit.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use num_complex::Complex;

use crate::error::{Result, WgsError};
use crate::geometry::Geometry;
use crate::linalg::{identity, CMatrix};
use crate::models::Model;
use crate::scalar::{cis, czero, Real};
use crate::varstate::{cayley, unpack, Ansatz, ParameterVector};

pub const DEFAULT_STATE_CAP: usize = 1 << 20;
pub const DEFAULT_DENSE_CAP: usize = 4096;

pub type StateVector<T> = Array1<Complex<T>>;

fn checked_dim(levels: usize, n_sites: usize, cap: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..n_sites {
        dim = dim.checked_mul(levels).filter(|&d| d <= cap).ok_or(WgsError::CapExceeded {
            dim: levels.saturating_pow(n_sites as u32),
            cap,
        })?;
    }
    Ok(dim)
}

fn digits_of(mut idx: usize, levels: usize, n_sites: usize) -> Vec<usize> {
    let mut out = vec![0; n_sites];
    for a in (0..n_sites).rev() {
        out[a] = idx % levels;
        idx /= levels;
    }
    out
}

/// Literal evaluation of the normalized variational state.
pub fn build_state<T: Real>(ansatz: &Ansatz, x: &ParameterVector<T>, cap: usize) -> Result<StateVector<T>> {
    let parts = unpack(ansatz, x)?;
    let n = ansatz.levels();
    let n_sites = ansatz.num_sites();
    let dim = checked_dim(n, n_sites, cap)?;
    let map = ansatz.phase_map();
    let phi = |a: usize, b: usize, s: usize, t: usize| -> T {
        if s == 0 || t == 0 {
            return T::zero();
        }
        match map.index(a, b) {
            None => T::zero(),
            Some(r) if map.symmetric() || a < b => parts.phases[r][[s - 1, t - 1]],
            Some(r) => parts.phases[r][[t - 1, s - 1]],
        }
    };
    let mut psi = Array1::from_elem(dim, czero());
    for (idx, amp) in psi.iter_mut().enumerate() {
        let conf = digits_of(idx, n, n_sites);
        let mut angle = T::zero();
        for a in 0..n_sites {
            for b in a + 1..n_sites {
                angle = angle + phi(a, b, conf[a], conf[b]);
            }
        }
        let mut sum: Complex<T> = czero();
        for (j, alpha) in parts.alphas.iter().enumerate() {
            let mut prod = *alpha;
            for (a, &s) in conf.iter().enumerate() {
                if s > 0 {
                    prod = prod * parts.deformations[[j, ansatz.class_of(a), s]];
                }
            }
            sum = sum + prod;
        }
        *amp = sum * cis(angle);
    }
    for a in 0..n_sites {
        let u = cayley(&parts.generators[ansatz.class_of(a)])
            .map_err(|_| WgsError::SingularCayley { class: ansatz.class_of(a) })?;
        psi = apply_local(&psi, &u, a, n, n_sites);
    }
    normalize(psi)
}

fn normalize<T: Real>(psi: StateVector<T>) -> Result<StateVector<T>> {
    let norm = psi.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(WgsError::DegenerateState { trace: norm.as_f64() });
    }
    Ok(psi.mapv(|z| z / norm))
}

/// Applies a single-site operator to site `a`.
pub fn apply_local<T: Real>(psi: &StateVector<T>, op: &CMatrix<T>, a: usize, levels: usize, n_sites: usize) -> StateVector<T> {
    let stride = levels.pow((n_sites - 1 - a) as u32);
    let mut out = Array1::from_elem(psi.len(), czero());
    for idx in 0..psi.len() {
        let s = (idx / stride) % levels;
        let base = idx - s * stride;
        for t in 0..levels {
            out[base + t * stride] = out[base + t * stride] + op[[t, s]] * psi[idx];
        }
    }
    out
}

/// `|+⟩^N` with a controlled-Z applied on every edge.
pub fn cz_graph_state<T: Real>(n_sites: usize, edges: &[(usize, usize)]) -> Result<StateVector<T>> {
    let dim = checked_dim(2, n_sites, DEFAULT_STATE_CAP)?;
    let amp = T::one() / T::of(dim as f64).sqrt();
    let mut psi = Array1::from_elem(dim, Complex::new(amp, T::zero()));
    for &(a, b) in edges {
        let (ma, mb) = (1usize << (n_sites - 1 - a), 1usize << (n_sites - 1 - b));
        for (idx, z) in psi.iter_mut().enumerate() {
            if idx & ma != 0 && idx & mb != 0 {
                *z = -*z;
            }
        }
    }
    Ok(psi)
}

pub fn overlap<T: Real>(a: &StateVector<T>, b: &StateVector<T>) -> Complex<T> {
    a.iter().zip(b.iter()).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Partial trace of `|ψ⟩⟨ψ|` onto `sites` (in the given order).
pub fn brute_rdm<T: Real>(psi: &StateVector<T>, levels: usize, n_sites: usize, sites: &[usize]) -> Result<CMatrix<T>> {
    if sites.iter().any(|&s| s >= n_sites) {
        return Err(WgsError::InvalidArgument("site out of range".into()));
    }
    let q = sites.len();
    let dim_a = levels.pow(q as u32);
    let env: Vec<usize> = (0..n_sites).filter(|s| !sites.contains(s)).collect();
    let dim_e = levels.pow(env.len() as u32);
    let strides: Vec<usize> = (0..n_sites).map(|a| levels.pow((n_sites - 1 - a) as u32)).collect();
    let offset = |sub: &[usize], digits: usize, count: usize| -> usize {
        let mut rem = digits;
        let mut off = 0;
        for i in (0..count).rev() {
            off += (rem % levels) * strides[sub[i]];
            rem /= levels;
        }
        off
    };
    let mut rho = Array2::from_elem((dim_a, dim_a), czero());
    for e in 0..dim_e {
        let eo = offset(&env, e, env.len());
        for r in 0..dim_a {
            let left = psi[eo + offset(sites, r, q)];
            for rp in 0..dim_a {
                let right = psi[eo + offset(sites, rp, q)];
                rho[[r, rp]] = rho[[r, rp]] + left * right.conj();
            }
        }
    }
    Ok(rho)
}

/// Embeds a two-site operator acting on `(a, b)` into the full space.
pub fn embed_pair<T: Real>(op: &CMatrix<T>, a: usize, b: usize, levels: usize, n_sites: usize) -> CMatrix<T> {
    let dim = levels.pow(n_sites as u32);
    let sa = levels.pow((n_sites - 1 - a) as u32);
    let sb = levels.pow((n_sites - 1 - b) as u32);
    let mut out = Array2::from_elem((dim, dim), czero());
    for col in 0..dim {
        let (ca, cb) = ((col / sa) % levels, (col / sb) % levels);
        let base = col - ca * sa - cb * sb;
        for ra in 0..levels {
            for rb in 0..levels {
                let v = op[[ra * levels + rb, ca * levels + cb]];
                if v != czero() {
                    out[[base + ra * sa + rb * sb, col]] = out[[base + ra * sa + rb * sb, col]] + v;
                }
            }
        }
    }
    out
}

pub fn embed_site<T: Real>(op: &CMatrix<T>, a: usize, levels: usize, n_sites: usize) -> CMatrix<T> {
    let eye = identity::<T>(levels);
    let other = if a == 0 { 1 } else { 0 };
    // op ⊗ 1 on (a, other), with the identity factor leaving `other` untouched.
    embed_pair(&crate::linalg::kron(op, &eye), a, other, levels, n_sites)
}

/// `Σ_bonds multiplicity · H_ab` as a dense matrix.
pub fn assembled_hamiltonian<T: Real>(geometry: &Geometry, hams: &[CMatrix<T>], levels: usize, cap: usize) -> Result<CMatrix<T>> {
    let n_sites = geometry.num_sites();
    let dim = checked_dim(levels, n_sites, cap)?;
    let mut h = Array2::from_elem((dim, dim), czero());
    for (b, hb) in geometry.bonds().iter().zip(hams) {
        let m = T::of(b.multiplicity as f64);
        h = h + embed_pair(hb, b.a, b.b, levels, n_sites).mapv(|z| z * m);
    }
    Ok(h)
}

/// Nearest-neighbour pairs listed once per lattice slot: each site paired
/// with its forward neighbour along every axis.
fn neighbour_slots(geometry: &Geometry) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..geometry.num_sites() {
        let c = geometry.coords(a);
        for axis in 0..geometry.dimension() {
            let l = geometry.lengths()[axis];
            if c[axis] + 1 < l || geometry.pbc()[axis] {
                let mut nc = c.clone();
                nc[axis] = (c[axis] + 1) % l;
                out.push((a, geometry.site_at(&nc)));
            }
        }
    }
    out
}

/// Hamiltonian written directly from the model definition: couplings on
/// every neighbour slot plus the full single-site term on every site.
pub fn textbook_hamiltonian<T: Real>(geometry: &Geometry, model: &Model, levels: usize, cap: usize) -> Result<CMatrix<T>> {
    model.check_levels(levels)?;
    let n_sites = geometry.num_sites();
    let dim = checked_dim(levels, n_sites, cap)?;
    let coupling: CMatrix<T> = match *model {
        Model::Xy { gamma, .. } => {
            let g = T::of(gamma);
            let half = T::of(0.5);
            let x = crate::models::pauli_x::<T>();
            let y = crate::models::pauli_y::<T>();
            crate::linalg::kron(&x, &x).mapv(|z| z * (half * (T::one() + g)))
                + crate::linalg::kron(&y, &y).mapv(|z| z * (half * (T::one() - g)))
        }
        Model::BoseHubbard { j, .. } => {
            let b = crate::models::annihilation::<T>(levels);
            let bd = crate::linalg::adjoint(&b);
            (crate::linalg::kron(&bd, &b) + crate::linalg::kron(&b, &bd)).mapv(|z| z * (-T::of(j)))
        }
    };
    let mut h = Array2::from_elem((dim, dim), czero());
    for (a, b) in neighbour_slots(geometry) {
        h = h + embed_pair(&coupling, a, b, levels, n_sites);
    }
    let site = model.site_term::<T>(levels)?;
    for a in 0..n_sites {
        h = h + embed_site(&site, a, levels, n_sites);
    }
    Ok(h)
}

pub fn expectation_dense<T: Real>(psi: &StateVector<T>, op: &CMatrix<T>) -> Complex<T> {
    let hv = op.dot(psi);
    overlap(psi, &hv)
}

/// Lowest eigenpair of a dense Hermitian matrix.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub vector: StateVector<f64>,
    pub residual: f64,
}

pub fn lowest_eigenpair(h: &CMatrix<f64>) -> Result<GroundState> {
    let dim = h.nrows();
    let real = h.iter().all(|z| z.im == 0.0);
    let (energy, vector) = if real {
        let m = DMatrix::from_fn(dim, dim, |r, c| 0.5 * (h[[r, c]].re + h[[c, r]].re));
        let eig = SymmetricEigen::new(m);
        let k = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(k);
        (eig.eigenvalues[k], Array1::from_shape_fn(dim, |i| Complex::new(v[i], 0.0)))
    } else {
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            let (a, b) = (h[[r, c]], h[[c, r]].conj());
            nalgebra::Complex::new(0.5 * (a.re + b.re), 0.5 * (a.im + b.im))
        });
        let eig = SymmetricEigen::new(m);
        let k = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(k);
        (eig.eigenvalues[k], Array1::from_shape_fn(dim, |i| Complex::new(v[i].re, v[i].im)))
    };
    let hv = h.dot(&vector);
    let residual = hv
        .iter()
        .zip(vector.iter())
        .map(|(a, b)| (a - b * energy).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if !energy.is_finite() || residual > 1e-9 * energy.abs().max(1.0) {
        return Err(WgsError::Numerical(format!("dense eigensolver residual {residual:e}")));
    }
    Ok(GroundState { energy, vector, residual })
}

/// Ground state of the textbook Hamiltonian of `model` on `geometry`.
pub fn exact_ground(geometry: &Geometry, model: &Model, levels: usize) -> Result<GroundState> {
    let h = textbook_hamiltonian::<f64>(geometry, model, levels, DEFAULT_DENSE_CAP)?;
    lowest_eigenpair(&h)
}

/// `⟨O⟩` of a site observable in a dense state, averaged over all sites.
pub fn site_average(psi: &StateVector<f64>, op: &CMatrix<f64>, levels: usize, n_sites: usize) -> Result<f64> {
    let mut total = 0.0;
    for a in 0..n_sites {
        let rho = brute_rdm(psi, levels, n_sites, &[a])?;
        total += crate::linalg::trace_product(op, &rho).re;
    }
    Ok(total / n_sites as f64)
}

/// Compressibility of a dense state.
pub fn compressibility_dense(psi: &StateVector<f64>, levels: usize, n_sites: usize) -> Result<f64> {
    let num = crate::models::number::<f64>(levels);
    let sq = num.dot(&num);
    let mut total = 0.0;
    for a in 0..n_sites {
        let rho = brute_rdm(psi, levels, n_sites, &[a])?;
        let mean = crate::linalg::trace_product(&num, &rho).re;
        let second = crate::linalg::trace_product(&sq, &rho).re;
        total += (second - mean * mean).max(0.0).sqrt();
    }
    Ok(total / n_sites as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PhaseMode;
    use crate::varstate::{pack, StateParts};

    #[test]
    fn three_qubit_weighted_graph_state() {
        let g = Geometry::chain(3).unwrap();
        let a = Ansatz::new(g, PhaseMode::None, 2, 1).unwrap();
        let mut parts = StateParts::<f64>::plus_state(&a);
        let (p12, p13, p23) = (0.3, -1.1, 2.5);
        parts.phases[a.phase_map().index(0, 1).unwrap()][[0, 0]] = p12;
        parts.phases[a.phase_map().index(0, 2).unwrap()][[0, 0]] = p13;
        parts.phases[a.phase_map().index(1, 2).unwrap()][[0, 0]] = p23;
        let psi = build_state(&a, &pack(&a, &parts).unwrap(), DEFAULT_STATE_CAP).unwrap();
        let want = [0.0, 0.0, 0.0, p23, 0.0, p13, p12, p12 + p13 + p23];
        for (z, w) in psi.iter().zip(want) {
            assert!((z - cis(w) / 8f64.sqrt()).norm() < 1e-15);
        }
    }

    #[test]
    fn full_trace_is_projector() {
        let psi = cz_graph_state::<f64>(3, &[(0, 1), (1, 2)]).unwrap();
        let rho = brute_rdm(&psi, 2, 3, &[0, 1, 2]).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert!((rho[[r, c]] - psi[r] * psi[c].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let g = Geometry::ring(12).unwrap();
        let a = Ansatz::new(g, PhaseMode::Orbit, 5, 1).unwrap();
        let x = pack(&a, &StateParts::<f64>::plus_state(&a)).unwrap();
        assert!(matches!(build_state(&a, &x, DEFAULT_STATE_CAP), Err(WgsError::CapExceeded { .. })));
    }

    #[test]
    fn single_bond_ising() {
        let g = Geometry::chain(2).unwrap();
        let gs = exact_ground(&g, &Model::ising(0.0), 2).unwrap();
        assert!((gs.energy + 1.0).abs() < 1e-12);
        assert!(gs.residual < 1e-12);
    }

    #[test]
    fn bose_hubbard_without_hopping() {
        let g = Geometry::torus(2, 2).unwrap();
        for mu in [0.0, 0.3, 1.5] {
            let gs = exact_ground(&g, &Model::bose_hubbard(0.0, mu), 4).unwrap();
            let per_site = (0..4).map(|k| k as f64 * (k as f64 - 1.0) / 2.0 - mu * k as f64).fold(f64::INFINITY, f64::min);
            assert!((gs.energy - 4.0 * per_site).abs() < 1e-12);
        }
    }
}
