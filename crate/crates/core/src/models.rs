//! Bond Hamiltonians and observables.
//!
//! Single-site terms are split evenly over the bonds incident to a site, so
//! that the system Hamiltonian is `Σ_bonds multiplicity · H_ab` with
//! `z_a` the summed multiplicity of the bonds at `a`.

use ndarray::Array2;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgsError};
use crate::geometry::Geometry;
use crate::linalg::{identity, kron, max_singular_value, CMatrix};
use crate::rdm::{real_part, PreparedState};
use crate::scalar::{cone, creal, czero, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    /// `Σ (1+γ)/2 σxσx + (1-γ)/2 σyσy + B Σ σz`
    Xy { b: f64, gamma: f64 },
    /// `-J Σ (b†b + h.c.) + Σ [U n(n-1)/2 - μ n]`, truncated at `n - 1` bosons.
    BoseHubbard {
        j: f64,
        #[serde(default = "unit")]
        u: f64,
        mu: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Model {
    pub fn ising(b: f64) -> Self {
        Model::Xy { b, gamma: 1.0 }
    }

    pub fn bose_hubbard(j: f64, mu: f64) -> Self {
        Model::BoseHubbard { j, u: 1.0, mu }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Xy { .. } => "xy",
            Model::BoseHubbard { .. } => "bose_hubbard",
        }
    }

    pub fn check_levels(&self, levels: usize) -> Result<()> {
        match self {
            Model::Xy { .. } if levels != 2 => Err(WgsError::InvalidArgument(format!(
                "the XY model needs 2 levels per site, got {levels}"
            ))),
            _ if levels < 2 => Err(WgsError::InvalidArgument("at least 2 levels are required".into())),
            _ => Ok(()),
        }
    }

    /// Names of the Hamiltonian parameters, in the order of [`Self::parameters`].
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            Model::Xy { .. } => &["b", "gamma"],
            Model::BoseHubbard { .. } => &["j", "u", "mu"],
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            Model::Xy { b, gamma } => vec![b, gamma],
            Model::BoseHubbard { j, u, mu } => vec![j, u, mu],
        }
    }

    pub fn parameter(&self, name: &str) -> Result<f64> {
        self.parameter_names()
            .iter()
            .position(|&n| n == name)
            .map(|i| self.parameters()[i])
            .ok_or_else(|| WgsError::InvalidArgument(format!("{} has no parameter {name:?}", self.name())))
    }

    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut m = *self;
        match (&mut m, name) {
            (Model::Xy { b, .. }, "b") => *b = value,
            (Model::Xy { gamma, .. }, "gamma") => *gamma = value,
            (Model::BoseHubbard { j, .. }, "j") => *j = value,
            (Model::BoseHubbard { u, .. }, "u") => *u = value,
            (Model::BoseHubbard { mu, .. }, "mu") => *mu = value,
            _ => {
                return Err(WgsError::InvalidArgument(format!(
                    "{} has no parameter {name:?}",
                    self.name()
                )))
            }
        }
        Ok(m)
    }

    /// Two-site Hamiltonian for a bond whose ends have coordinations `za`, `zb`.
    pub fn bond<T: Real>(&self, levels: usize, za: usize, zb: usize) -> Result<CMatrix<T>> {
        self.check_levels(levels)?;
        Ok(match *self {
            Model::Xy { b, gamma } => xy_bond(T::of(b), T::of(gamma), za, zb),
            Model::BoseHubbard { j, u, mu } => bh_bond(T::of(j), T::of(u), T::of(mu), levels, za, zb),
        })
    }

    /// Bond Hamiltonians aligned with `geometry.bonds()`.
    pub fn bond_hamiltonians<T: Real>(&self, geometry: &Geometry, levels: usize) -> Result<Vec<CMatrix<T>>> {
        geometry
            .bonds()
            .iter()
            .map(|b| self.bond(levels, geometry.coordination(b.a), geometry.coordination(b.b)))
            .collect()
    }

    /// The full single-site term acting on one site.
    pub fn site_term<T: Real>(&self, levels: usize) -> Result<CMatrix<T>> {
        self.check_levels(levels)?;
        Ok(match *self {
            Model::Xy { b, .. } => pauli_z::<T>().mapv(|z| z * T::of(b)),
            Model::BoseHubbard { u, mu, .. } => bh_site(T::of(u), T::of(mu), levels),
        })
    }
}

pub fn pauli_x<T: Real>() -> CMatrix<T> {
    let (o, z) = (cone(), czero());
    Array2::from_shape_vec((2, 2), vec![z, o, o, z]).unwrap()
}

pub fn pauli_y<T: Real>() -> CMatrix<T> {
    let i = Complex::new(T::zero(), T::one());
    Array2::from_shape_vec((2, 2), vec![czero(), -i, i, czero()]).unwrap()
}

pub fn pauli_z<T: Real>() -> CMatrix<T> {
    let (o, z) = (cone::<T>(), czero());
    Array2::from_shape_vec((2, 2), vec![o, z, z, -o]).unwrap()
}

/// `σ_x, σ_y, σ_z` by index 0, 1, 2.
pub fn pauli<T: Real>(i: usize) -> CMatrix<T> {
    match i {
        0 => pauli_x(),
        1 => pauli_y(),
        _ => pauli_z(),
    }
}

pub fn xy_bond<T: Real>(b: T, gamma: T, za: usize, zb: usize) -> CMatrix<T> {
    let half = T::of(0.5);
    let one = T::one();
    let eye = identity::<T>(2);
    let z = pauli_z::<T>();
    let xx = kron(&pauli_x::<T>(), &pauli_x()).mapv(|v| v * (half * (one + gamma)));
    let yy = kron(&pauli_y::<T>(), &pauli_y()).mapv(|v| v * (half * (one - gamma)));
    let za_term = kron(&z, &eye).mapv(|v| v * (b / T::of(za as f64)));
    let zb_term = kron(&eye, &z).mapv(|v| v * (b / T::of(zb as f64)));
    xx + yy + za_term + zb_term
}

/// Truncated annihilation operator on levels `0..n`.
pub fn annihilation<T: Real>(levels: usize) -> CMatrix<T> {
    Array2::from_shape_fn((levels, levels), |(r, c)| {
        if c == r + 1 {
            creal(T::of(c as f64).sqrt())
        } else {
            czero()
        }
    })
}

pub fn number<T: Real>(levels: usize) -> CMatrix<T> {
    Array2::from_shape_fn((levels, levels), |(r, c)| if r == c { creal(T::of(r as f64)) } else { czero() })
}

fn bh_site<T: Real>(u: T, mu: T, levels: usize) -> CMatrix<T> {
    Array2::from_shape_fn((levels, levels), |(r, c)| {
        if r == c {
            let k = T::of(r as f64);
            creal(u * k * (k - T::one()) * T::of(0.5) - mu * k)
        } else {
            czero()
        }
    })
}

pub fn bh_bond<T: Real>(j: T, u: T, mu: T, levels: usize, za: usize, zb: usize) -> CMatrix<T> {
    let b = annihilation::<T>(levels);
    let bd = crate::linalg::adjoint(&b);
    let eye = identity::<T>(levels);
    let hop = (kron(&bd, &b) + kron(&b, &bd)).mapv(|v| v * (-j));
    let site = bh_site(u, mu, levels);
    let sa = kron(&site, &eye).mapv(|v| v / T::of(za as f64));
    let sb = kron(&eye, &site).mapv(|v| v / T::of(zb as f64));
    hop + sa + sb
}

/// `E = Σ_bonds multiplicity · tr(H_ab ρ_ab)`, bonds evaluated in parallel.
pub fn energy<T: Real>(state: &PreparedState<T>, hams: &[CMatrix<T>]) -> Result<T> {
    let bonds = state.ansatz().geometry().bonds();
    if hams.len() != bonds.len() {
        return Err(WgsError::Shape(format!("{} bond Hamiltonians for {} bonds", hams.len(), bonds.len())));
    }
    let terms: Vec<T> = bonds
        .par_iter()
        .zip(hams.par_iter())
        .map(|(b, h)| {
            let e = state.expectation_real(&[b.a, b.b], h)?;
            Ok(e * T::of(b.multiplicity as f64))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(terms.into_iter().fold(T::zero(), |acc, e| acc + e))
}

fn one_site_moments<T: Real>(state: &PreparedState<T>, site: usize) -> Result<(T, T)> {
    let n = state.ansatz().levels();
    let num = number::<T>(n);
    let rho = state.rdm(&[site])?;
    let mean = real_part(crate::linalg::trace_product(&num, &rho))?;
    let sq = real_part(crate::linalg::trace_product(&num.dot(&num), &rho))?;
    Ok((mean, sq))
}

/// Mean occupation per site.
pub fn density<T: Real>(state: &PreparedState<T>) -> Result<T> {
    let n_sites = state.ansatz().num_sites();
    let sum = (0..n_sites)
        .map(|a| one_site_moments(state, a).map(|m| m.0))
        .collect::<Result<Vec<T>>>()?
        .into_iter()
        .fold(T::zero(), |acc, v| acc + v);
    Ok(sum / T::of(n_sites as f64))
}

/// `κ = (1/N) Σ_a sqrt(⟨n_a²⟩ - ⟨n_a⟩²)`.
pub fn compressibility<T: Real>(state: &PreparedState<T>) -> Result<T> {
    let n_sites = state.ansatz().num_sites();
    let mut sum = T::zero();
    for a in 0..n_sites {
        let (mean, sq) = one_site_moments(state, a)?;
        let var = sq - mean * mean;
        if var < -T::of(1e-10).max(T::epsilon() * T::of(1e3)) {
            return Err(WgsError::Numerical(format!("negative occupation variance {var} at site {a}")));
        }
        sum = sum + var.max(T::zero()).sqrt();
    }
    Ok(sum / T::of(n_sites as f64))
}

/// `C_ij = ⟨σ_i^a σ_j^b⟩ - ⟨σ_i^a⟩⟨σ_j^b⟩` and its largest singular value.
pub fn correlation_matrix<T: Real>(state: &PreparedState<T>, a: usize, b: usize) -> Result<(Array2<T>, T)> {
    if state.ansatz().levels() != 2 {
        return Err(WgsError::InvalidArgument("correlation matrix needs 2 levels".into()));
    }
    let rho = state.rdm(&[a, b])?;
    let eye = identity::<T>(2);
    let mut ma = [T::zero(); 3];
    let mut mb = [T::zero(); 3];
    for i in 0..3 {
        ma[i] = real_part(crate::linalg::trace_product(&kron(&pauli::<T>(i), &eye), &rho))?;
        mb[i] = real_part(crate::linalg::trace_product(&kron(&eye, &pauli::<T>(i)), &rho))?;
    }
    let mut c = Array2::zeros((3, 3));
    for i in 0..3 {
        for j in 0..3 {
            let op = kron(&pauli::<T>(i), &pauli::<T>(j));
            c[[i, j]] = real_part(crate::linalg::trace_product(&op, &rho))? - ma[i] * mb[j];
        }
    }
    let sv = max_singular_value(&c);
    Ok((c, sv))
}

/// Image of every site under a lattice translation.
pub fn translated_sites(geometry: &Geometry, displacement: &[isize]) -> Result<Vec<usize>> {
    (0..geometry.num_sites())
        .map(|a| {
            geometry.translate(a, displacement).ok_or_else(|| {
                WgsError::InvalidArgument(format!("displacement {displacement:?} leaves the lattice from site {a}"))
            })
        })
        .collect()
}

/// `(γ, raw)` with `raw = (1/N) Σ_a ⟨n_a n_a'⟩` and `γ = raw - ρ²`.
pub fn density_density<T: Real>(state: &PreparedState<T>, displacement: &[isize]) -> Result<(T, T)> {
    let geometry = state.ansatz().geometry();
    if !geometry.fully_periodic() {
        return Err(WgsError::InvalidArgument("density correlations need periodic boundaries".into()));
    }
    let image = translated_sites(geometry, displacement)?;
    let n = state.ansatz().levels();
    let num = number::<T>(n);
    let nn = kron(&num, &num);
    let n_sites = geometry.num_sites();
    let mut raw = T::zero();
    for (a, &ap) in image.iter().enumerate() {
        raw = raw
            + if a == ap {
                one_site_moments(state, a)?.1
            } else {
                real_part(crate::linalg::trace_product(&nn, &state.rdm(&[a, ap])?))?
            };
    }
    raw = raw / T::of(n_sites as f64);
    let rho = density(state)?;
    Ok((raw - rho * rho, raw))
}

/// Mean over sites of `⟨σ_i^a σ_j^a'⟩ - ⟨σ_i^a⟩⟨σ_j^a'⟩` at a fixed displacement.
pub fn mean_two_point<T: Real>(state: &PreparedState<T>, i: usize, j: usize, displacement: &[isize]) -> Result<T> {
    if state.ansatz().levels() != 2 || i > 2 || j > 2 {
        return Err(WgsError::InvalidArgument("two-point functions need 2 levels and Pauli indices 0..3".into()));
    }
    let geometry = state.ansatz().geometry();
    let image = translated_sites(geometry, displacement)?;
    let (si, sj) = (pauli::<T>(i), pauli::<T>(j));
    let mut sum = T::zero();
    for (a, &ap) in image.iter().enumerate() {
        let ea = state.expectation_real(&[a], &si)?;
        let eb = state.expectation_real(&[ap], &sj)?;
        let joint = if a == ap {
            state.expectation_real(&[a], &si.dot(&sj))?
        } else {
            state.expectation_real(&[a, ap], &kron(&si, &sj))?
        };
        sum = sum + joint - ea * eb;
    }
    Ok(sum / T::of(image.len() as f64))
}

/// Named observables for reports. XY: per-distance maximum correlation
/// singular values; Bose-Hubbard: density and compressibility.
pub fn snapshot(state: &PreparedState<f64>, model: &Model) -> Result<std::collections::BTreeMap<String, f64>> {
    let mut out = std::collections::BTreeMap::new();
    match model {
        Model::Xy { .. } => {
            let g = state.ansatz().geometry();
            let mut worst: std::collections::BTreeMap<usize, f64> = Default::default();
            for b in 1..g.num_sites() {
                let d = g.graph_distance(0, b);
                let (_, sv) = correlation_matrix(state, 0, b)?;
                let e = worst.entry(d).or_insert(0.0);
                *e = e.max(sv);
            }
            let mut all = 0.0f64;
            for (d, sv) in worst {
                out.insert(format!("max_corr_sv_d{d}"), sv);
                all = all.max(sv);
            }
            out.insert("max_corr_sv".into(), all);
            if g.dimension() == 1 && g.fully_periodic() {
                out.insert("xx_nn".into(), mean_two_point(state, 0, 0, &[1])?);
            }
        }
        Model::BoseHubbard { .. } => {
            out.insert("density".into(), density(state)?);
            out.insert("compressibility".into(), compressibility(state)?);
        }
    }
    Ok(out)
}
