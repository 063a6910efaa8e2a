//! Variational parameters and their maps to state ingredients.
//!
//! A state is described by phase matrices `Φ_r` (one per phase index), per
//! branch deformations `d[j][a][s]` with `d[j][a][0] = 1`, superposition
//! coefficients `α_j`, and per-site upper-triangular generators `Ã_a` whose
//! Hermitian part `A = Ã + Ã†` is mapped to a unitary by the Cayley
//! transform `U = (i + A)(i - A)^-1`.
//!
//! The flat parameter vector has the fixed layout
//!
//! ```text
//! [ phases | deformations | alphas | generators ]
//! phases       r-major; (n-1)^2 entries, or the upper triangle with diagonal
//!              when the phase map is symmetric
//! deformations branch-major, then site class, then level s = 1..n-1, (Re, Im)
//! alphas       (Re, Im) per branch
//! generators   per site class: n diagonal reals, then the strict upper
//!              triangle row-major as (Re, Im)
//! ```

use std::ops::Range;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgsError};
use crate::geometry::{Geometry, PhaseIndexMap, PhaseMode};
use crate::linalg::{adjoint, identity, solve, CMatrix};
use crate::scalar::{cis, czero, Real};

pub const LAYOUT_VERSION: u32 = 1;

/// Structure of the variational family: lattice, phase sharing, level count,
/// branch count and the site-to-class map for deformations and unitaries.
#[derive(Clone, Debug)]
pub struct Ansatz {
    geometry: Arc<Geometry>,
    phase_map: Arc<PhaseIndexMap>,
    levels: usize,
    branches: usize,
    site_class: Vec<usize>,
    n_classes: usize,
}

impl Ansatz {
    pub fn new(geometry: Geometry, mode: PhaseMode, levels: usize, branches: usize) -> Result<Self> {
        let phase_map = PhaseIndexMap::build(&geometry, mode)?;
        Self::from_parts(Arc::new(geometry), Arc::new(phase_map), levels, branches)
    }

    pub fn from_parts(
        geometry: Arc<Geometry>,
        phase_map: Arc<PhaseIndexMap>,
        levels: usize,
        branches: usize,
    ) -> Result<Self> {
        if levels < 2 {
            return Err(WgsError::InvalidArgument(format!("levels must be >= 2, got {levels}")));
        }
        if branches < 1 {
            return Err(WgsError::InvalidArgument("at least one branch is required".into()));
        }
        if phase_map.num_sites() != geometry.num_sites() {
            return Err(WgsError::Shape("phase map and geometry disagree on site count".into()));
        }
        let n = geometry.num_sites();
        Ok(Ansatz {
            geometry,
            phase_map,
            levels,
            branches,
            site_class: (0..n).collect(),
            n_classes: n,
        })
    }

    /// Shares deformations and unitaries between sites of the same class.
    /// Classes must be numbered `0..k` without gaps.
    pub fn with_local_classes(mut self, classes: Vec<usize>) -> Result<Self> {
        if classes.len() != self.num_sites() {
            return Err(WgsError::Shape(format!(
                "{} local classes for {} sites",
                classes.len(),
                self.num_sites()
            )));
        }
        let k = classes.iter().max().map_or(0, |m| m + 1);
        if (0..k).any(|c| !classes.contains(&c)) {
            return Err(WgsError::InvalidArgument("local classes must be contiguous".into()));
        }
        self.site_class = classes;
        self.n_classes = k;
        Ok(self)
    }

    pub fn with_branches(&self, branches: usize) -> Result<Self> {
        let mut a = self.clone();
        if branches < 1 {
            return Err(WgsError::InvalidArgument("at least one branch is required".into()));
        }
        a.branches = branches;
        Ok(a)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn phase_map(&self) -> &PhaseIndexMap {
        &self.phase_map
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn branches(&self) -> usize {
        self.branches
    }

    pub fn num_sites(&self) -> usize {
        self.geometry.num_sites()
    }

    pub fn num_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_of(&self, site: usize) -> usize {
        self.site_class[site]
    }

    pub fn local_classes(&self) -> &[usize] {
        &self.site_class
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn header(&self) -> LayoutHeader {
        LayoutHeader {
            version: LAYOUT_VERSION,
            sites: self.num_sites(),
            levels: self.levels,
            branches: self.branches,
            phase_count: self.phase_map.count(),
            phase_mode: self.phase_map.mode(),
            local_classes: (self.n_classes != self.num_sites()
                || self.site_class.iter().enumerate().any(|(i, &c)| i != c))
            .then(|| self.site_class.clone()),
        }
    }
}

/// Offsets of the parameter blocks inside the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub levels: usize,
    pub branches: usize,
    pub classes: usize,
    pub phase_count: usize,
    pub symmetric_phases: bool,
    pub phases: Range<usize>,
    pub deformations: Range<usize>,
    pub alphas: Range<usize>,
    pub generators: Range<usize>,
}

impl Layout {
    fn new(a: &Ansatz) -> Self {
        let n = a.levels;
        let sym = a.phase_map.symmetric();
        let per_phase = if sym { (n - 1) * n / 2 } else { (n - 1) * (n - 1) };
        let p_len = per_phase * a.phase_map.count();
        let d_len = 2 * a.branches * a.n_classes * (n - 1);
        let a_len = 2 * a.branches;
        let u_len = a.n_classes * n * n;
        Layout {
            levels: n,
            branches: a.branches,
            classes: a.n_classes,
            phase_count: a.phase_map.count(),
            symmetric_phases: sym,
            phases: 0..p_len,
            deformations: p_len..p_len + d_len,
            alphas: p_len + d_len..p_len + d_len + a_len,
            generators: p_len + d_len + a_len..p_len + d_len + a_len + u_len,
        }
    }

    pub fn len(&self) -> usize {
        self.generators.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn per_phase(&self) -> usize {
        let k = self.levels - 1;
        if self.symmetric_phases {
            k * (k + 1) / 2
        } else {
            k * k
        }
    }

    /// Offset of `Φ_r[p][q]` for levels `p, q >= 1`. In symmetric layouts the
    /// pair is unordered.
    pub fn phase(&self, r: usize, p: usize, q: usize) -> usize {
        let k = self.levels - 1;
        let (i, j) = (p - 1, q - 1);
        let within = if self.symmetric_phases {
            let (i, j) = (i.min(j), i.max(j));
            i * k - i * i.saturating_sub(1) / 2 + (j - i)
        } else {
            i * k + j
        };
        self.phases.start + r * self.per_phase() + within
    }

    /// Offset of `Re d[branch][class][level]`; the imaginary part follows.
    pub fn deformation(&self, branch: usize, class: usize, level: usize) -> usize {
        let k = self.levels - 1;
        self.deformations.start + 2 * ((branch * self.classes + class) * k + (level - 1))
    }

    pub fn alpha(&self, branch: usize) -> usize {
        self.alphas.start + 2 * branch
    }

    /// Offset of the first parameter of class `class`'s generator.
    pub fn generator(&self, class: usize) -> usize {
        self.generators.start + class * self.levels * self.levels
    }
}

/// Self-describing header persisted alongside parameter values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutHeader {
    pub version: u32,
    pub sites: usize,
    pub levels: usize,
    pub branches: usize,
    pub phase_count: usize,
    pub phase_mode: PhaseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_classes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ParameterVector<T> {
    pub header: LayoutHeader,
    pub values: Vec<T>,
}

impl<T: Real> ParameterVector<T> {
    pub fn zeros(ansatz: &Ansatz) -> Self {
        ParameterVector {
            header: ansatz.header(),
            values: vec![T::zero(); ansatz.layout().len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, ansatz: &Ansatz) -> Result<()> {
        let want = ansatz.header();
        if self.header != want {
            return Err(WgsError::Shape(format!(
                "parameter header {:?} does not match ansatz {:?}",
                self.header, want
            )));
        }
        if self.values.len() != ansatz.layout().len() {
            return Err(WgsError::Shape(format!(
                "{} values, layout needs {}",
                self.values.len(),
                ansatz.layout().len()
            )));
        }
        Ok(())
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        ParameterVector { header: self.header.clone(), values }
    }
}

/// Unpacked parameters. The same container also holds gradients, with each
/// complex entry storing `(∂/∂Re, ∂/∂Im)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateParts<T> {
    /// `R` matrices of shape `(n-1, n-1)`; index `[p-1, q-1]` is `Φ^{pq}`.
    pub phases: Vec<Array2<T>>,
    /// Shape `(m, classes, n)`; level 0 is fixed to 1 and not a parameter.
    pub deformations: Array3<Complex<T>>,
    pub alphas: Vec<Complex<T>>,
    /// Upper-triangular `n × n` generators with real diagonal, per class.
    pub generators: Vec<CMatrix<T>>,
}

impl<T: Real> StateParts<T> {
    pub fn zeros(ansatz: &Ansatz) -> Self {
        let n = ansatz.levels();
        let mut deformations = Array3::from_elem((ansatz.branches(), ansatz.num_classes(), n), czero());
        deformations.slice_mut(ndarray::s![.., .., 0]).fill(Complex::new(T::one(), T::zero()));
        StateParts {
            phases: vec![Array2::zeros((n - 1, n - 1)); ansatz.phase_map().count()],
            deformations,
            alphas: vec![czero(); ansatz.branches()],
            generators: vec![Array2::from_elem((n, n), czero()); ansatz.num_classes()],
        }
    }

    /// Product state `|+⟩^N`: zero phases, unit deformations, `α = 1`, `U = 1`.
    pub fn plus_state(ansatz: &Ansatz) -> Self {
        let mut p = Self::zeros(ansatz);
        p.deformations.fill(Complex::new(T::one(), T::zero()));
        p.alphas.iter_mut().for_each(|a| *a = Complex::new(T::one(), T::zero()));
        p
    }

    fn check(&self, ansatz: &Ansatz) -> Result<()> {
        let n = ansatz.levels();
        let ok = self.phases.len() == ansatz.phase_map().count()
            && self.phases.iter().all(|p| p.dim() == (n - 1, n - 1))
            && self.deformations.dim() == (ansatz.branches(), ansatz.num_classes(), n)
            && self.alphas.len() == ansatz.branches()
            && self.generators.len() == ansatz.num_classes()
            && self.generators.iter().all(|g| g.dim() == (n, n));
        if ok {
            Ok(())
        } else {
            Err(WgsError::Shape("state parts do not match the ansatz".into()))
        }
    }
}

pub fn pack<T: Real>(ansatz: &Ansatz, parts: &StateParts<T>) -> Result<ParameterVector<T>> {
    parts.check(ansatz)?;
    let lay = ansatz.layout();
    let mut x = ParameterVector::zeros(ansatz);
    write_blocks(&lay, parts, &mut x.values, false);
    Ok(x)
}

/// Packs a gradient held in [`StateParts`] form. With symmetric phase
/// matrices the stored parameter `Φ^{pq} = Φ^{qp}` collects both entries.
pub fn pack_gradient<T: Real>(ansatz: &Ansatz, grad: &StateParts<T>) -> Result<Vec<T>> {
    grad.check(ansatz)?;
    let lay = ansatz.layout();
    let mut out = vec![T::zero(); lay.len()];
    write_blocks(&lay, grad, &mut out, true);
    Ok(out)
}

fn write_blocks<T: Real>(lay: &Layout, parts: &StateParts<T>, out: &mut [T], fold: bool) {
    let n = lay.levels;
    for (r, phi) in parts.phases.iter().enumerate() {
        for p in 1..n {
            for q in 1..n {
                if lay.symmetric_phases {
                    if q < p {
                        continue;
                    }
                    let v = if fold && p != q {
                        phi[[p - 1, q - 1]] + phi[[q - 1, p - 1]]
                    } else {
                        phi[[p - 1, q - 1]]
                    };
                    out[lay.phase(r, p, q)] = v;
                } else {
                    out[lay.phase(r, p, q)] = phi[[p - 1, q - 1]];
                }
            }
        }
    }
    for j in 0..lay.branches {
        for c in 0..lay.classes {
            for s in 1..n {
                let o = lay.deformation(j, c, s);
                let z = parts.deformations[[j, c, s]];
                out[o] = z.re;
                out[o + 1] = z.im;
            }
        }
        let o = lay.alpha(j);
        out[o] = parts.alphas[j].re;
        out[o + 1] = parts.alphas[j].im;
    }
    for (c, g) in parts.generators.iter().enumerate() {
        let mut o = lay.generator(c);
        for k in 0..n {
            out[o] = g[[k, k]].re;
            o += 1;
        }
        for k in 0..n {
            for l in k + 1..n {
                out[o] = g[[k, l]].re;
                out[o + 1] = g[[k, l]].im;
                o += 2;
            }
        }
    }
}

pub fn unpack<T: Real>(ansatz: &Ansatz, x: &ParameterVector<T>) -> Result<StateParts<T>> {
    x.check(ansatz)?;
    Ok(unpack_values(ansatz, &x.values))
}

pub(crate) fn unpack_values<T: Real>(ansatz: &Ansatz, v: &[T]) -> StateParts<T> {
    let lay = ansatz.layout();
    let n = lay.levels;
    let mut parts = StateParts::zeros(ansatz);
    for (r, phi) in parts.phases.iter_mut().enumerate() {
        for p in 1..n {
            for q in 1..n {
                phi[[p - 1, q - 1]] = v[lay.phase(r, p, q)];
            }
        }
    }
    for j in 0..lay.branches {
        for c in 0..lay.classes {
            for s in 1..n {
                let o = lay.deformation(j, c, s);
                parts.deformations[[j, c, s]] = Complex::new(v[o], v[o + 1]);
            }
        }
        let o = lay.alpha(j);
        parts.alphas[j] = Complex::new(v[o], v[o + 1]);
    }
    for (c, g) in parts.generators.iter_mut().enumerate() {
        let mut o = lay.generator(c);
        for k in 0..n {
            g[[k, k]] = Complex::new(v[o], T::zero());
            o += 1;
        }
        for k in 0..n {
            for l in k + 1..n {
                g[[k, l]] = Complex::new(v[o], v[o + 1]);
                o += 2;
            }
        }
    }
    parts
}

/// `A = Ã + Ã†`, reading only the diagonal real parts and the strict upper triangle.
pub fn hermitian_from_generator<T: Real>(gen: &CMatrix<T>) -> CMatrix<T> {
    let n = gen.nrows();
    Array2::from_shape_fn((n, n), |(k, l)| {
        if k == l {
            Complex::new(gen[[k, k]].re * T::of(2.0), T::zero())
        } else if k < l {
            gen[[k, l]]
        } else {
            gen[[l, k]].conj()
        }
    })
}

/// Cayley-transformed unitary together with the resolvent needed for its
/// derivatives: `∂U = (1 + U) ∂A (i - A)^-1`.
#[derive(Clone, Debug)]
pub struct CayleyUnitary<T> {
    pub u: CMatrix<T>,
    /// `(i - A)^-1`
    pub resolvent: CMatrix<T>,
}

pub fn cayley_with_resolvent<T: Real>(gen: &CMatrix<T>, class: usize) -> Result<CayleyUnitary<T>> {
    let n = gen.nrows();
    let a = hermitian_from_generator(gen);
    let i = Complex::new(T::zero(), T::one());
    let eye = identity::<T>(n);
    let minus = eye.mapv(|z| z * i) - &a;
    let plus = eye.mapv(|z| z * i) + &a;
    let resolvent = solve(&minus, &eye).ok_or(WgsError::SingularCayley { class })?;
    let u = plus.dot(&resolvent);
    Ok(CayleyUnitary { u, resolvent })
}

/// `U = (i + A)(i - A)^-1` with `A = Ã + Ã†`.
pub fn cayley<T: Real>(gen: &CMatrix<T>) -> Result<CMatrix<T>> {
    cayley_with_resolvent(gen, 0).map(|c| c.u)
}

/// Diagonal two-site gate `Σ_{st} e^{iΦ^{st}} |st⟩⟨st|` with `Φ^{s0} = Φ^{0t} = 0`.
pub fn phase_gate<T: Real>(phi: &Array2<T>) -> CMatrix<T> {
    let n = phi.nrows() + 1;
    let mut w = Array2::from_elem((n * n, n * n), czero());
    for s in 0..n {
        for t in 0..n {
            let z = if s == 0 || t == 0 {
                Complex::new(T::one(), T::zero())
            } else {
                cis(phi[[s - 1, t - 1]])
            };
            w[[s * n + t, s * n + t]] = z;
        }
    }
    w
}

/// Sampling intervals for [`random_init`] and [`extend_superposition`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitRanges {
    pub phase: (f64, f64),
    pub deformation: (f64, f64),
    pub alpha: (f64, f64),
    pub generator: (f64, f64),
}

impl Default for InitRanges {
    fn default() -> Self {
        InitRanges {
            phase: (-5.0, 5.0),
            deformation: (-5.0, 5.0),
            alpha: (-5.0, 5.0),
            generator: (-5.0, 5.0),
        }
    }
}

impl InitRanges {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        InitRanges { phase: (lo, hi), deformation: (lo, hi), alpha: (lo, hi), generator: (lo, hi) }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Uniform random parameters, deterministic in `seed`.
pub fn random_init<T: Real>(ansatz: &Ansatz, seed: u64, ranges: &InitRanges) -> ParameterVector<T> {
    let lay = ansatz.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = ParameterVector::zeros(ansatz);
    for (i, v) in x.values.iter_mut().enumerate() {
        let range = if lay.phases.contains(&i) {
            ranges.phase
        } else if lay.deformations.contains(&i) {
            ranges.deformation
        } else if lay.alphas.contains(&i) {
            ranges.alpha
        } else {
            ranges.generator
        };
        *v = T::of(draw(&mut rng, range));
    }
    x
}

/// Appends one superposition branch. Existing values are copied unchanged;
/// the new branch's deformations are drawn from `ranges.deformation` and its
/// coefficient has real and imaginary parts in `[-alpha_scale, alpha_scale]`.
pub fn extend_superposition<T: Real>(
    ansatz: &Ansatz,
    x: &ParameterVector<T>,
    seed: u64,
    alpha_scale: f64,
    ranges: &InitRanges,
) -> Result<(Ansatz, ParameterVector<T>)> {
    let mut parts = unpack(ansatz, x)?;
    let m = ansatz.branches();
    let bigger = ansatz.with_branches(m + 1)?;
    let n = ansatz.levels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Array3::from_elem((m + 1, ansatz.num_classes(), n), czero());
    d.slice_mut(ndarray::s![..m, .., ..]).assign(&parts.deformations);
    for c in 0..ansatz.num_classes() {
        d[[m, c, 0]] = Complex::new(T::one(), T::zero());
        for s in 1..n {
            let re = draw(&mut rng, ranges.deformation);
            let im = draw(&mut rng, ranges.deformation);
            d[[m, c, s]] = Complex::new(T::of(re), T::of(im));
        }
    }
    parts.deformations = d;
    let re = draw(&mut rng, (-alpha_scale, alpha_scale));
    let im = draw(&mut rng, (-alpha_scale, alpha_scale));
    parts.alphas.push(Complex::new(T::of(re), T::of(im)));
    let y = pack(&bigger, &parts)?;
    Ok((bigger, y))
}

/// Unitarity defect `max |U†U - 1|`.
pub fn unitarity_defect<T: Real>(u: &CMatrix<T>) -> T {
    let prod = adjoint(u).dot(u);
    let eye = identity::<T>(u.nrows());
    (&prod - &eye).iter().fold(T::zero(), |m, z| m.max(z.norm()))
}
