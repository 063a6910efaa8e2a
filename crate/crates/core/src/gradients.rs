//! Analytic gradient of `E(x) = Σ_bonds multiplicity · tr(H_ab ρ_ab)`.
//!
//! Per bond, with `t = tr ρ̃`, `ρ̌ = Ŵ ⊙ ρ̃` (phase gates inside the bond),
//! `G = U† H U` and `E_b = tr(G ρ̌) / t`, any change of `ρ̃` enters through
//!
//! ```text
//! dE_b = Σ K ⊙ dρ̃ / t,      K = Gᵀ ⊙ Ŵ - E_b 𝟙
//! ```
//!
//! For a complex parameter `p` with `dρ̃ = Z dp + h.c.` and `c = Σ K ⊙ ∂Z/∂p`
//! this gives `∂E/∂Re p = 2 Re c / t` and `∂E/∂Im p = -2 Im c / t`. Phases
//! inside the bond and the local unitaries act after `ρ̃` and are handled
//! directly. Environment contributions use the accumulated Hadamard product
//! with the factor of the varied site divided back out.

use ndarray::{Array2, Array3};
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Result, WgsError};
use crate::linalg::{adjoint, identity, kron, CMatrix};
use crate::rdm::{PreparedState, SubsetIndex};
use crate::scalar::{cone, czero, Real};
use crate::varstate::{pack_gradient, unpack_values, Ansatz, StateParts};

/// Bonds per parallel work unit; partial sums are combined in bond order so
/// results do not depend on the thread count.
const CHUNK: usize = 4;

/// Energy with its gradient in both unpacked and packed form.
#[derive(Clone, Debug)]
pub struct Gradient<T> {
    pub energy: T,
    pub parts: StateParts<T>,
    pub flat: Vec<T>,
}

/// Per-site accumulator; folded into site classes at the end.
#[derive(Clone)]
struct SiteGrad<T> {
    phases: Vec<Array2<T>>,
    /// `(m, N, n)`, entries `(∂Re, ∂Im)`
    d: Array3<Complex<T>>,
    alphas: Vec<Complex<T>>,
    generators: Vec<CMatrix<T>>,
    energy: T,
}

impl<T: Real> SiteGrad<T> {
    fn zeros(a: &Ansatz) -> Self {
        let n = a.levels();
        SiteGrad {
            phases: vec![Array2::zeros((n - 1, n - 1)); a.phase_map().count()],
            d: Array3::from_elem((a.branches(), a.num_sites(), n), czero()),
            alphas: vec![czero(); a.branches()],
            generators: vec![Array2::from_elem((n, n), czero()); a.num_sites()],
            energy: T::zero(),
        }
    }

    fn add(&mut self, o: &SiteGrad<T>) {
        for (p, q) in self.phases.iter_mut().zip(&o.phases) {
            p.zip_mut_with(q, |x, &y| *x = *x + y);
        }
        self.d.zip_mut_with(&o.d, |x, &y| *x = *x + y);
        for (p, q) in self.alphas.iter_mut().zip(&o.alphas) {
            *p = *p + *q;
        }
        for (p, q) in self.generators.iter_mut().zip(&o.generators) {
            p.zip_mut_with(q, |x, &y| *x = *x + y);
        }
        self.energy = self.energy + o.energy;
    }

    fn add_phase(&mut self, a: &Ansatz, x: usize, y: usize, p: usize, s: usize, v: T) {
        if let Some((r, transposed)) = a.phase_map().oriented(x, y) {
            let (i, j) = if transposed { (s - 1, p - 1) } else { (p - 1, s - 1) };
            self.phases[r][[i, j]] = self.phases[r][[i, j]] + v;
        }
    }

    fn into_parts(self, a: &Ansatz) -> StateParts<T> {
        let mut parts = StateParts::zeros(a);
        parts.phases = self.phases;
        parts.alphas = self.alphas;
        parts.deformations.fill(czero());
        for g in parts.generators.iter_mut() {
            g.fill(czero());
        }
        for site in 0..a.num_sites() {
            let c = a.class_of(site);
            for j in 0..a.branches() {
                for s in 1..a.levels() {
                    parts.deformations[[j, c, s]] = parts.deformations[[j, c, s]] + self.d[[j, site, s]];
                }
            }
            parts.generators[c].zip_mut_with(&self.generators[site], |x, &y| *x = *x + y);
        }
        parts
    }
}

/// Energy and full gradient in one pass over the bonds.
pub fn grad_energy<T: Real>(state: &PreparedState<T>, hams: &[CMatrix<T>]) -> Result<Gradient<T>> {
    let a = state.ansatz();
    let bonds = a.geometry().bonds();
    if hams.len() != bonds.len() {
        return Err(WgsError::Shape(format!("{} bond Hamiltonians for {} bonds", hams.len(), bonds.len())));
    }
    let idx: Vec<usize> = (0..bonds.len()).collect();
    let partial: Vec<SiteGrad<T>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = SiteGrad::zeros(a);
            for &i in chunk {
                let b = &bonds[i];
                bond_gradient(state, &[b.a, b.b], &hams[i], T::of(b.multiplicity as f64), &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = SiteGrad::zeros(a);
    for p in &partial {
        total.add(p);
    }
    let energy = total.energy;
    let parts = total.into_parts(a);
    let flat = pack_gradient(a, &parts)?;
    if flat.iter().any(|g| !g.is_finite()) || !energy.is_finite() {
        return Err(WgsError::Numerical("non-finite gradient".into()));
    }
    Ok(Gradient { energy, parts, flat })
}

/// Energy and packed gradient at the raw parameter values `x`.
pub fn energy_and_gradient<T: Real>(ansatz: &Ansatz, hams: &[CMatrix<T>], x: &[T]) -> Result<(T, Vec<T>)> {
    if x.len() != ansatz.layout().len() {
        return Err(WgsError::Shape(format!("{} values, layout needs {}", x.len(), ansatz.layout().len())));
    }
    let state = PreparedState::new(ansatz, unpack_values(ansatz, x))?;
    let g = grad_energy(&state, hams)?;
    Ok((g.energy, g.flat))
}

/// Energy alone at raw parameter values.
pub fn energy_at<T: Real>(ansatz: &Ansatz, hams: &[CMatrix<T>], x: &[T]) -> Result<T> {
    if x.len() != ansatz.layout().len() {
        return Err(WgsError::Shape(format!("{} values, layout needs {}", x.len(), ansatz.layout().len())));
    }
    let state = PreparedState::new(ansatz, unpack_values(ansatz, x))?;
    crate::models::energy(&state, hams)
}

fn bond_gradient<T: Real>(
    state: &PreparedState<T>,
    sites: &[usize],
    h: &CMatrix<T>,
    multiplicity: T,
    acc: &mut SiteGrad<T>,
) -> Result<()> {
    let a = state.ansatz();
    let m = a.branches();
    let n = a.levels();
    let q = sites.len();
    let inner = state.inner(sites, T::zero(), true)?;
    let dim = inner.index.dim;
    let index: &SubsetIndex = &inner.index;
    let t = inner.trace;
    let uall = &inner.uall;
    let g = adjoint(uall).dot(h).dot(uall);
    let e_b = crate::linalg::trace_product(&g, &inner.rho_check).re / t;
    acc.energy = acc.energy + multiplicity * e_b;
    let w = multiplicity * T::of(2.0) / t;
    let alphas = &state.parts.alphas;
    let k_mat = Array2::from_shape_fn((dim, dim), |(r, rp)| {
        let v = g[[rp, r]] * inner.theta[r] * inner.theta[rp].conj();
        if r == rp {
            v - Complex::new(e_b, T::zero())
        } else {
            v
        }
    });

    // Superposition coefficients and deformations of the bond's own sites.
    for l in 0..m {
        let mut c_alpha: Complex<T> = czero();
        let mut v_l: Vec<Complex<T>> = vec![czero(); dim];
        for k in 0..m {
            let pk = &inner.p[l * m + k];
            let ak = alphas[k].conj();
            for r in 0..dim {
                let dl = inner.dket[l][r];
                let mut row: Complex<T> = czero();
                for rp in 0..dim {
                    row = row + k_mat[[r, rp]] * pk[[r, rp]] * inner.dket[k][rp].conj();
                }
                c_alpha = c_alpha + ak * dl * row;
                v_l[r] = v_l[r] + alphas[l] * ak * row;
            }
        }
        acc.alphas[l] = acc.alphas[l] + Complex::new(w * c_alpha.re, -w * c_alpha.im);
        for (i, &site) in sites.iter().enumerate() {
            for s in 1..n {
                let mut c: Complex<T> = czero();
                for r in 0..dim {
                    if index.digit(r, i) != s {
                        continue;
                    }
                    let mut others: Complex<T> = cone();
                    for (bi, &b) in sites.iter().enumerate() {
                        if bi != i {
                            others = others * state.d[[l, b, index.digit(r, bi)]];
                        }
                    }
                    c = c + v_l[r] * others;
                }
                acc.d[[l, site, s]] = acc.d[[l, site, s]] + Complex::new(w * c.re, -w * c.im);
            }
        }
    }

    // Phase gates inside the bond.
    if q > 1 {
        let rows: Vec<T> = (0..dim)
            .map(|r| {
                let mut z: Complex<T> = czero();
                for rp in 0..dim {
                    z = z + g[[rp, r]] * inner.rho_check[[r, rp]];
                }
                z.im
            })
            .collect();
        for i in 0..q {
            for l in i + 1..q {
                for (r, &im) in rows.iter().enumerate() {
                    let (p, s) = (index.digit(r, i), index.digit(r, l));
                    if p > 0 && s > 0 {
                        acc.add_phase(a, sites[i], sites[l], p, s, -w * im);
                    }
                }
            }
        }
    }

    // Local unitaries.
    let lambda = inner.rho_check.dot(&adjoint(uall)).dot(h);
    for (i, &site) in sites.iter().enumerate() {
        let mut omega = identity::<T>(1);
        for (bi, &b) in sites.iter().enumerate() {
            let f = if bi == i { identity::<T>(n) } else { state.unitary(b).clone() };
            omega = kron(&omega, &f);
        }
        let ol = omega.dot(&lambda);
        let mut y = Array2::from_elem((n, n), czero());
        for r in 0..dim {
            for rp in 0..dim {
                let same_rest = (0..q).all(|bi| bi == i || index.digit(r, bi) == index.digit(rp, bi));
                if same_rest {
                    let (k, l) = (index.digit(r, i), index.digit(rp, i));
                    y[[k, l]] = y[[k, l]] + ol[[r, rp]];
                }
            }
        }
        let cay = state.cayley(site);
        let one_plus_u = &cay.u + &identity::<T>(n);
        let z = cay.resolvent.dot(&y).dot(&one_plus_u);
        let gen = &mut acc.generators[site];
        let iu = Complex::new(T::zero(), T::one());
        for k in 0..n {
            gen[[k, k]] = gen[[k, k]] + Complex::new(w * (z[[k, k]] * T::of(2.0)).re, T::zero());
            for l in k + 1..n {
                let re = (z[[l, k]] + z[[k, l]]).re;
                let im = (iu * (z[[l, k]] - z[[k, l]])).re;
                gen[[k, l]] = gen[[k, l]] + Complex::new(w * re, w * im);
            }
        }
    }

    // Environment sites: their deformations and the phases joining them to the bond.
    let weights: Vec<Complex<T>> = (0..m * m).map(|jk| alphas[jk / m] * alphas[jk % m].conj()).collect();
    for env in &inner.env {
        let (c, v) = (env.site, &env.vectors);
        // u[jk][s][r] = Σ_r' Q^{jk}[r, r'] v_s[r']*
        let mut u: Vec<Vec<Vec<Complex<T>>>> = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                let jk = j * m + k;
                if weights[jk] == czero() {
                    u.push(vec![vec![czero(); dim]; n]);
                    continue;
                }
                let pex = inner.accs[jk].excluding(&env.factors[jk], inner.shift);
                let qm = Array2::from_shape_fn((dim, dim), |(r, rp)| {
                    weights[jk] * k_mat[[r, rp]] * inner.dket[j][r] * inner.dket[k][rp].conj() * pex[[r, rp]]
                });
                let per_s: Vec<Vec<Complex<T>>> = (0..n)
                    .map(|s| {
                        if s == 0 {
                            return Vec::new();
                        }
                        (0..dim)
                            .map(|r| {
                                let mut z: Complex<T> = czero();
                                for rp in 0..dim {
                                    z = z + qm[[r, rp]] * v[s][rp].conj();
                                }
                                z
                            })
                            .collect()
                    })
                    .collect();
                u.push(per_s);
            }
        }
        for s in 1..n {
            let mut rowsum = vec![czero(); dim];
            for j in 0..m {
                let mut c_d: Complex<T> = czero();
                for k in 0..m {
                    let jk = j * m + k;
                    if weights[jk] == czero() {
                        continue;
                    }
                    let wdd = state.d[[j, c, s]] * state.d[[k, c, s]].conj();
                    let mut total: Complex<T> = czero();
                    for r in 0..dim {
                        let y = v[s][r] * u[jk][s][r];
                        total = total + y;
                        rowsum[r] = rowsum[r] + wdd * y;
                    }
                    c_d = c_d + state.d[[k, c, s]].conj() * total;
                }
                acc.d[[j, c, s]] = acc.d[[j, c, s]] + Complex::new(w * c_d.re, -w * c_d.im);
            }
            for (i, &site) in sites.iter().enumerate() {
                for p in 1..n {
                    let mut im = T::zero();
                    for (r, z) in rowsum.iter().enumerate() {
                        if index.digit(r, i) == p {
                            im = im + z.im;
                        }
                    }
                    acc.add_phase(a, site, c, p, s, -w * im);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Geometry, PhaseMode};
    use crate::models::Model;
    use crate::varstate::{random_init, InitRanges};

    fn fd(a: &Ansatz, hams: &[CMatrix<f64>], x: &[f64], i: usize) -> f64 {
        let h = 1e-5;
        let mut p = x.to_vec();
        p[i] += h;
        let up = energy_at(a, hams, &p).unwrap();
        p[i] -= 2.0 * h;
        let dn = energy_at(a, hams, &p).unwrap();
        (up - dn) / (2.0 * h)
    }

    #[test]
    fn matches_central_differences_small_instance() {
        let g = Geometry::ring(4).unwrap();
        let a = Ansatz::new(g.clone(), PhaseMode::None, 2, 2).unwrap();
        let hams = Model::Xy { b: 0.7, gamma: 0.4 }.bond_hamiltonians(&g, 2).unwrap();
        let x = random_init::<f64>(&a, 3, &InitRanges::uniform(-1.0, 1.0));
        let (_, grad) = energy_and_gradient(&a, &hams, &x.values).unwrap();
        for i in 0..x.len() {
            let want = fd(&a, &hams, &x.values, i);
            assert!((grad[i] - want).abs() <= 1e-6 * want.abs().max(1.0), "component {i}: {} vs {want}", grad[i]);
        }
    }

    #[test]
    fn zero_hamiltonian_gives_zero_gradient() {
        let g = Geometry::ring(5).unwrap();
        let a = Ansatz::new(g.clone(), PhaseMode::Orbit, 3, 2).unwrap();
        let hams = vec![Array2::from_elem((9, 9), czero::<f64>()); g.bonds().len()];
        let x = random_init::<f64>(&a, 8, &InitRanges::default());
        let (e, grad) = energy_and_gradient(&a, &hams, &x.values).unwrap();
        assert_eq!(e, 0.0);
        assert!(grad.iter().all(|v| v.abs() < 1e-12));
    }
}
