//! Reduced density matrices of a weighted-graph state in time linear in `N`.
//!
//! For a site subset `A` the unnormalized matrix is
//!
//! ```text
//! ρ̃ = Σ_jk α_j α_k* (D^j ⊗ D^k*) ⊙ ⨀_{c ∉ A} F_c^{jk}
//! F_c^{jk}[r, r'] = Σ_s d_cs^j d_cs^k* v_cs[r] v_cs[r']*,   v_cs[r] = exp(i Σ_{a∈A} Φ_ac^{r_a s})
//! ```
//!
//! after which the phase gates inside `A` and the local unitaries are applied
//! and the trace is divided out. The product over environment sites is
//! accumulated element-wise as a zero count, a bounded complex mantissa and a
//! binary exponent so that long products neither overflow nor underflow.
//!
//! Row/column indices of matrices over `A` use the order of the `sites` slice,
//! first site most significant.

use ndarray::{Array2, Array3};
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Result, WgsError};
use crate::geometry::PhaseIndexMap;
use crate::linalg::{adjoint, kron, trace, CMatrix};
use crate::scalar::{cis, cone, czero, Real};
use crate::varstate::{cayley_with_resolvent, unpack, Ansatz, CayleyUnitary, ParameterVector, StateParts};

pub const DEFAULT_MAX_SITES: usize = 3;

/// State ingredients expanded per site and ready for evaluation.
#[derive(Clone, Debug)]
pub struct PreparedState<T> {
    pub(crate) ansatz: Ansatz,
    pub(crate) parts: StateParts<T>,
    /// `(m, N, n)`
    pub(crate) d: Array3<Complex<T>>,
    pub(crate) unitaries: Vec<CayleyUnitary<T>>,
    max_sites: usize,
}

impl<T: Real> PreparedState<T> {
    pub fn new(ansatz: &Ansatz, parts: StateParts<T>) -> Result<Self> {
        let n = ansatz.levels();
        let m = ansatz.branches();
        let n_sites = ansatz.num_sites();
        let mut d = Array3::from_elem((m, n_sites, n), czero());
        for j in 0..m {
            for a in 0..n_sites {
                let c = ansatz.class_of(a);
                for s in 0..n {
                    d[[j, a, s]] = parts.deformations[[j, c, s]];
                }
                d[[j, a, 0]] = cone();
            }
        }
        let unitaries = parts
            .generators
            .iter()
            .enumerate()
            .map(|(c, g)| cayley_with_resolvent(g, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedState {
            ansatz: ansatz.clone(),
            parts,
            d,
            unitaries,
            max_sites: DEFAULT_MAX_SITES,
        })
    }

    pub fn from_vector(ansatz: &Ansatz, x: &ParameterVector<T>) -> Result<Self> {
        Self::new(ansatz, unpack(ansatz, x)?)
    }

    pub fn with_max_sites(mut self, cap: usize) -> Self {
        self.max_sites = cap;
        self
    }

    pub fn ansatz(&self) -> &Ansatz {
        &self.ansatz
    }

    pub fn parts(&self) -> &StateParts<T> {
        &self.parts
    }

    pub fn unitary(&self, site: usize) -> &CMatrix<T> {
        &self.unitaries[self.ansatz.class_of(site)].u
    }

    pub(crate) fn cayley(&self, site: usize) -> &CayleyUnitary<T> {
        &self.unitaries[self.ansatz.class_of(site)]
    }

    /// `Φ_ab^{s t}` with `s` the level of `a` and `t` the level of `b`.
    #[inline]
    pub fn phase(&self, a: usize, b: usize, s: usize, t: usize) -> T {
        phase_lookup(self.ansatz.phase_map(), &self.parts.phases, a, b, s, t)
    }

    fn check_sites(&self, sites: &[usize]) -> Result<()> {
        let n_sites = self.ansatz.num_sites();
        if sites.is_empty() || sites.len() > self.max_sites {
            return Err(WgsError::InvalidArgument(format!(
                "subset size {} outside 1..={}",
                sites.len(),
                self.max_sites
            )));
        }
        for (i, &a) in sites.iter().enumerate() {
            if a >= n_sites {
                return Err(WgsError::InvalidArgument(format!("site {a} out of range")));
            }
            if sites[..i].contains(&a) {
                return Err(WgsError::InvalidArgument(format!("site {a} repeated")));
            }
        }
        Ok(())
    }

    /// Levels `v[s][r]` of the environment vectors `v_cs` for subset `sites`.
    pub(crate) fn env_vectors(&self, index: &SubsetIndex, c: usize) -> Vec<Vec<Complex<T>>> {
        let n = index.levels;
        let q = index.sites.len();
        // e[i][p][s] = exp(i Φ_{a_i c}^{p s})
        let e: Vec<Vec<Vec<Complex<T>>>> = index
            .sites
            .iter()
            .map(|&a| {
                (0..n)
                    .map(|p| (0..n).map(|s| cis(self.phase(a, c, p, s))).collect())
                    .collect()
            })
            .collect();
        (0..n)
            .map(|s| {
                (0..index.dim)
                    .map(|r| {
                        let mut z = cone();
                        for i in 0..q {
                            z = z * e[i][index.digit(r, i)][s];
                        }
                        z
                    })
                    .collect()
            })
            .collect()
    }

    /// `F_c^{jk}` built from precomputed environment vectors.
    pub(crate) fn factor_from(&self, v: &[Vec<Complex<T>>], c: usize, j: usize, k: usize) -> CMatrix<T> {
        let dim = v[0].len();
        let mut f = vec![czero(); dim * dim];
        for (s, vs) in v.iter().enumerate() {
            let w = self.d[[j, c, s]] * self.d[[k, c, s]].conj();
            if w == czero() {
                continue;
            }
            for (row, &vr) in f.chunks_exact_mut(dim).zip(vs.iter()) {
                let left = w * vr;
                for (x, vp) in row.iter_mut().zip(vs.iter()) {
                    *x = *x + left * vp.conj();
                }
            }
        }
        Array2::from_shape_vec((dim, dim), f).expect("square factor")
    }

    /// Contribution `F_c^{jk}` of environment site `c` for branch pair `(j, k)`.
    pub fn hadamard_factor(&self, sites: &[usize], c: usize, j: usize, k: usize) -> Result<CMatrix<T>> {
        self.check_sites(sites)?;
        if sites.contains(&c) {
            return Err(WgsError::InvalidArgument(format!("site {c} is inside the subset")));
        }
        let index = SubsetIndex::new(sites, self.ansatz.levels());
        let v = self.env_vectors(&index, c);
        Ok(self.factor_from(&v, c, j, k))
    }

    /// Normalized reduced density matrix on `sites`.
    pub fn rdm(&self, sites: &[usize]) -> Result<CMatrix<T>> {
        self.rdm_with_shift_offset(sites, T::zero())
    }

    /// Like [`Self::rdm`] with the log-space shift raised by `offset`.
    pub fn rdm_with_shift_offset(&self, sites: &[usize], offset: T) -> Result<CMatrix<T>> {
        self.check_sites(sites)?;
        let inner = self.inner(sites, offset, false)?;
        Ok(inner.normalized())
    }

    /// `tr(O ρ_A)`.
    pub fn expectation(&self, sites: &[usize], op: &CMatrix<T>) -> Result<Complex<T>> {
        let dim = self.ansatz.levels().pow(sites.len() as u32);
        if op.dim() != (dim, dim) {
            return Err(WgsError::Shape(format!("operator is {:?}, subset needs {dim}", op.dim())));
        }
        let rho = self.rdm(sites)?;
        Ok(crate::linalg::trace_product(op, &rho))
    }

    /// Expectation of a Hermitian operator; the imaginary residue is checked.
    pub fn expectation_real(&self, sites: &[usize], op: &CMatrix<T>) -> Result<T> {
        real_part(self.expectation(sites, op)?)
    }

    /// Accumulates the environment products; with `keep` the per-site
    /// vectors and factors are stored for the gradient.
    pub(crate) fn inner(&self, sites: &[usize], offset: T, keep: bool) -> Result<Inner<T>> {
        let index = SubsetIndex::new(sites, self.ansatz.levels());
        let m = self.ansatz.branches();
        let dim = index.dim;
        let mut accs: Vec<LogAccumulator<T>> = (0..m * m).map(|_| LogAccumulator::new(dim)).collect();
        let mut env = Vec::new();
        for c in 0..self.ansatz.num_sites() {
            if sites.contains(&c) {
                continue;
            }
            let v = self.env_vectors(&index, c);
            let mut fs: Vec<Option<CMatrix<T>>> = vec![None; m * m];
            for j in 0..m {
                for k in j..m {
                    let f = self.factor_from(&v, c, j, k);
                    if k != j {
                        fs[k * m + j] = Some(adjoint(&f));
                    }
                    fs[j * m + k] = Some(f);
                }
            }
            let fs: Vec<CMatrix<T>> = fs.into_iter().map(|f| f.expect("all pairs built")).collect();
            for (acc, f) in accs.iter_mut().zip(fs.iter()) {
                acc.push(f)?;
            }
            if keep {
                env.push(EnvSite { site: c, vectors: v, factors: fs });
            }
        }
        let shift = choose_shift(&accs) + offset;
        let p: Vec<CMatrix<T>> = accs.iter().map(|a| a.value(shift)).collect();
        let dket: Vec<Vec<Complex<T>>> = (0..m)
            .map(|j| {
                (0..dim)
                    .map(|r| {
                        (0..sites.len()).fold(cone(), |z, i| z * self.d[[j, sites[i], index.digit(r, i)]])
                    })
                    .collect()
            })
            .collect();
        let alphas = &self.parts.alphas;
        let mut rho_tilde = Array2::from_elem((dim, dim), czero());
        for j in 0..m {
            for k in 0..m {
                let w = alphas[j] * alphas[k].conj();
                if w == czero() {
                    continue;
                }
                let pk = &p[j * m + k];
                for r in 0..dim {
                    let left = w * dket[j][r];
                    for rp in 0..dim {
                        rho_tilde[[r, rp]] = rho_tilde[[r, rp]] + left * dket[k][rp].conj() * pk[[r, rp]];
                    }
                }
            }
        }
        let theta: Vec<Complex<T>> = (0..dim)
            .map(|r| {
                let mut th = T::zero();
                for i in 0..sites.len() {
                    for l in i + 1..sites.len() {
                        th = th + self.phase(sites[i], sites[l], index.digit(r, i), index.digit(r, l));
                    }
                }
                cis(th)
            })
            .collect();
        let rho_check = Array2::from_shape_fn((dim, dim), |(r, rp)| theta[r] * theta[rp].conj() * rho_tilde[[r, rp]]);
        let mut uall = self.unitary(sites[0]).clone();
        for &a in &sites[1..] {
            uall = kron(&uall, self.unitary(a));
        }
        let t = trace(&rho_tilde);
        if !(t.re > T::zero()) || !t.re.is_finite() || !t.im.is_finite() {
            return Err(WgsError::DegenerateState { trace: t.re.as_f64() });
        }
        Ok(Inner {
            index,
            accs,
            shift,
            p,
            dket,
            theta,
            rho_check,
            uall,
            trace: t.re,
            env,
        })
    }
}

/// Phase lookup shared by state evaluation code: zero for level 0 and for
/// frozen pairs.
#[inline]
pub(crate) fn phase_lookup<T: Real>(
    map: &PhaseIndexMap,
    phases: &[Array2<T>],
    a: usize,
    b: usize,
    s: usize,
    t: usize,
) -> T {
    if s == 0 || t == 0 {
        return T::zero();
    }
    match map.oriented(a, b) {
        None => T::zero(),
        Some((r, false)) => phases[r][[s - 1, t - 1]],
        Some((r, true)) => phases[r][[t - 1, s - 1]],
    }
}

pub(crate) fn real_part<T: Real>(z: Complex<T>) -> Result<T> {
    let tol = T::of(1e-10).max(T::epsilon() * T::of(1e3)) * z.re.abs().max(T::one());
    if z.im.abs() > tol || !z.re.is_finite() {
        return Err(WgsError::Numerical(format!("expected a real value, got {z}")));
    }
    Ok(z.re)
}

/// Multi-index helper for a subset of sites, first site most significant.
#[derive(Clone, Debug)]
pub(crate) struct SubsetIndex {
    pub sites: Vec<usize>,
    pub levels: usize,
    pub dim: usize,
    digits: Vec<usize>,
}

impl SubsetIndex {
    pub fn new(sites: &[usize], levels: usize) -> Self {
        let q = sites.len();
        let dim = levels.pow(q as u32);
        let mut digits = vec![0; dim * q];
        for r in 0..dim {
            let mut rem = r;
            for i in (0..q).rev() {
                digits[r * q + i] = rem % levels;
                rem /= levels;
            }
        }
        SubsetIndex { sites: sites.to_vec(), levels, dim, digits }
    }

    #[inline]
    pub fn digit(&self, r: usize, i: usize) -> usize {
        self.digits[r * self.sites.len() + i]
    }
}

/// Element-wise product of complex matrices kept as zero count, a complex
/// mantissa and a binary exponent, so the log-magnitude of an element is
/// `ln|mant| + exp2 · ln 2`.
#[derive(Clone, Debug)]
pub struct LogAccumulator<T> {
    zeros: Array2<u32>,
    mant: CMatrix<T>,
    exp2: Array2<i32>,
}

/// Mantissa range `[2^-bits, 2^bits]`; products of two stay finite.
#[derive(Clone, Copy)]
struct MantRange<T> {
    bits: i32,
    lo: T,
    hi: T,
}

impl<T: Real> MantRange<T> {
    fn new() -> Self {
        let b = T::max_value().log2().to_f64().unwrap_or(128.0);
        let bits = (b / 4.0).floor() as i32;
        MantRange { bits, lo: pow2(-bits), hi: pow2(bits) }
    }
}

fn pow2<T: Real>(e: i32) -> T {
    T::of(2.0).powi(e)
}

/// Rescales `z` by a power of two into `[1, 2)` on its larger component.
#[inline]
fn normalize<T: Real>(z: Complex<T>, r: MantRange<T>) -> (Complex<T>, i32) {
    let bits = r.bits;
    let a = z.re.abs().max(z.im.abs());
    if a >= r.lo && a <= r.hi {
        return (z, 0);
    }
    let e = a.log2().floor().to_i32().unwrap_or(0);
    let mut w = z;
    let mut left = -e;
    while left != 0 {
        let step = left.clamp(-bits, bits);
        w = w * pow2::<T>(step);
        left -= step;
    }
    (w, e)
}

impl<T: Real> LogAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        LogAccumulator {
            zeros: Array2::zeros((dim, dim)),
            mant: Array2::from_elem((dim, dim), cone()),
            exp2: Array2::zeros((dim, dim)),
        }
    }

    pub fn push(&mut self, f: &CMatrix<T>) -> Result<()> {
        let bits = MantRange::<T>::new();
        for (idx, z) in f.indexed_iter() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(WgsError::Numerical("non-finite Hadamard factor".into()));
            }
            if z.re == T::zero() && z.im == T::zero() {
                self.zeros[idx] += 1;
                continue;
            }
            let (w, ew) = normalize(*z, bits);
            let (p, ep) = normalize(self.mant[idx] * w, bits);
            self.mant[idx] = p;
            self.exp2[idx] += ew + ep;
        }
        Ok(())
    }

    #[inline]
    fn log_mag(&self, idx: (usize, usize)) -> T {
        self.mant[idx].norm().ln() + T::of(self.exp2[idx] as f64) * T::LN_2()
    }

    /// Largest log-magnitude among elements without a zero factor.
    pub fn max_log(&self) -> Option<T> {
        self.zeros
            .indexed_iter()
            .filter(|(_, &z)| z == 0)
            .map(|(idx, _)| self.log_mag(idx))
            .fold(None, |m: Option<T>, l| Some(m.map_or(l, |m| m.max(l))))
    }

    /// `exp(log-sum - shift) · phase`, zero where a factor vanished.
    pub fn value(&self, shift: T) -> CMatrix<T> {
        Array2::from_shape_fn(self.mant.dim(), |idx| self.element(idx, shift))
    }

    #[inline]
    pub(crate) fn element(&self, idx: (usize, usize), shift: T) -> Complex<T> {
        if self.zeros[idx] > 0 {
            return czero();
        }
        self.mant[idx] * (T::of(self.exp2[idx] as f64) * T::LN_2() - shift).exp()
    }

    /// The accumulated product with one factor `f` divided back out.
    pub(crate) fn excluding(&self, f: &CMatrix<T>, shift: T) -> CMatrix<T> {
        let bits = MantRange::<T>::new();
        Array2::from_shape_fn(self.mant.dim(), |idx| {
            let z = f[idx];
            let own_zero = u32::from(z.re == T::zero() && z.im == T::zero());
            if self.zeros[idx] > own_zero {
                return czero();
            }
            if own_zero == 1 {
                return self.mant[idx] * (T::of(self.exp2[idx] as f64) * T::LN_2() - shift).exp();
            }
            let (w, ew) = normalize(z, bits);
            let e = T::of((self.exp2[idx] - ew) as f64) * T::LN_2() - shift;
            self.mant[idx] / w * e.exp()
        })
    }
}

/// Shift making the largest exponentiated magnitude equal to one.
pub fn choose_shift<T: Real>(accs: &[LogAccumulator<T>]) -> T {
    accs.iter()
        .filter_map(|a| a.max_log())
        .fold(None, |m: Option<T>, l| Some(m.map_or(l, |m| m.max(l))))
        .unwrap_or_else(T::zero)
}

/// Intermediate quantities of one subset evaluation, reused by gradients.
pub(crate) struct Inner<T> {
    pub index: SubsetIndex,
    pub accs: Vec<LogAccumulator<T>>,
    pub shift: T,
    pub p: Vec<CMatrix<T>>,
    pub dket: Vec<Vec<Complex<T>>>,
    /// `exp(i θ(r))` from the phase gates inside the subset.
    pub theta: Vec<Complex<T>>,
    pub rho_check: CMatrix<T>,
    pub uall: CMatrix<T>,
    pub trace: T,
    pub env: Vec<EnvSite<T>>,
}

/// Environment vectors and branch-pair factors of one site outside the subset.
pub(crate) struct EnvSite<T> {
    pub site: usize,
    pub vectors: Vec<Vec<Complex<T>>>,
    pub factors: Vec<CMatrix<T>>,
}

impl<T: Real> Inner<T> {
    pub fn unnormalized(&self) -> CMatrix<T> {
        self.uall.dot(&self.rho_check).dot(&adjoint(&self.uall))
    }

    pub fn normalized(&self) -> CMatrix<T> {
        let inv = T::one() / self.trace;
        self.unnormalized().mapv(|z| z * inv)
    }
}

/// Normalized `ρ_A` of the state encoded by `x`.
pub fn rdm<T: Real>(ansatz: &Ansatz, x: &ParameterVector<T>, sites: &[usize]) -> Result<CMatrix<T>> {
    PreparedState::from_vector(ansatz, x)?.rdm(sites)
}

pub fn expectation<T: Real>(
    ansatz: &Ansatz,
    x: &ParameterVector<T>,
    sites: &[usize],
    op: &CMatrix<T>,
) -> Result<Complex<T>> {
    PreparedState::from_vector(ansatz, x)?.expectation(sites, op)
}

/// Reduced density matrices of all bonds, evaluated in parallel.
pub fn bond_rdms<T: Real>(state: &PreparedState<T>) -> Result<Vec<CMatrix<T>>> {
    state
        .ansatz
        .geometry()
        .bonds()
        .par_iter()
        .map(|b| state.rdm(&[b.a, b.b]))
        .collect()
}
