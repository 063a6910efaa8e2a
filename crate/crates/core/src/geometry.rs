//! Lattices, bonds and the phase-index map used for parameter sharing.
//!
//! Sites are indexed row-major: on a lattice with lengths `[l0, l1]` the site
//! at coordinates `(i0, i1)` has index `i0 * l1 + i1`. Bonds join nearest
//! neighbours along each axis; on a periodic axis of length 2 both neighbours
//! coincide, so the pair is stored once with multiplicity 2.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WgsError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub lengths: Vec<usize>,
    pub pbc: Vec<bool>,
}

/// An unordered nearest-neighbour pair with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    /// Number of raw neighbour slots that collapsed onto this pair.
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    lengths: Vec<usize>,
    pbc: Vec<bool>,
    bonds: Vec<Bond>,
    coordination: Vec<usize>,
}

/// A point-group element acting on displacement vectors: axis `k` of the
/// image is `sign[k] * d[perm[k]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointOp {
    pub perm: Vec<usize>,
    pub sign: Vec<i64>,
}

impl Geometry {
    pub fn new(lengths: &[usize], pbc: &[bool]) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(WgsError::Geometry(format!(
                "dimension must be 1 or 2, got {}",
                lengths.len()
            )));
        }
        if pbc.len() != lengths.len() {
            return Err(WgsError::Geometry(format!(
                "{} boundary flags for {} axes",
                pbc.len(),
                lengths.len()
            )));
        }
        if let Some(l) = lengths.iter().find(|&&l| l < 2) {
            return Err(WgsError::Geometry(format!("axis length {l} < 2")));
        }
        let mut g = Geometry {
            lengths: lengths.to_vec(),
            pbc: pbc.to_vec(),
            bonds: Vec::new(),
            coordination: Vec::new(),
        };
        g.bonds = g.enumerate_bonds();
        g.coordination = coordination_of(g.num_sites(), &g.bonds);
        Ok(g)
    }

    pub fn from_spec(spec: &GeometrySpec) -> Result<Self> {
        Self::new(&spec.lengths, &spec.pbc)
    }

    pub fn ring(n: usize) -> Result<Self> {
        Self::new(&[n], &[true])
    }

    pub fn chain(n: usize) -> Result<Self> {
        Self::new(&[n], &[false])
    }

    pub fn torus(l0: usize, l1: usize) -> Result<Self> {
        Self::new(&[l0, l1], &[true, true])
    }

    pub fn spec(&self) -> GeometrySpec {
        GeometrySpec {
            lengths: self.lengths.clone(),
            pbc: self.pbc.clone(),
        }
    }

    /// Same lattice (and symmetry group) with only the bonds accepted by `keep`.
    pub fn restrict_bonds(&self, keep: impl Fn(&Bond) -> bool) -> Geometry {
        let bonds: Vec<Bond> = self.bonds.iter().copied().filter(|b| keep(b)).collect();
        let coordination = coordination_of(self.num_sites(), &bonds);
        Geometry {
            lengths: self.lengths.clone(),
            pbc: self.pbc.clone(),
            bonds,
            coordination,
        }
    }

    pub fn dimension(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn pbc(&self) -> &[bool] {
        &self.pbc
    }

    pub fn fully_periodic(&self) -> bool {
        self.pbc.iter().all(|&p| p)
    }

    pub fn num_sites(&self) -> usize {
        self.lengths.iter().product()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Sum of multiplicities of the bonds incident to `site`.
    pub fn coordination(&self, site: usize) -> usize {
        self.coordination[site]
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut c = vec![0; self.dimension()];
        let mut rest = site;
        for k in (0..self.dimension()).rev() {
            c[k] = rest % self.lengths[k];
            rest /= self.lengths[k];
        }
        c
    }

    pub fn site_at(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.lengths)
            .fold(0, |acc, (&c, &l)| acc * l + c)
    }

    /// Site reached from `site` by the lattice offset; `None` when an open axis
    /// is left.
    pub fn translate(&self, site: usize, offset: &[isize]) -> Option<usize> {
        let mut c = self.coords(site);
        for k in 0..self.dimension() {
            let l = self.lengths[k] as isize;
            let mut v = c[k] as isize + offset.get(k).copied().unwrap_or(0);
            if self.pbc[k] {
                v = v.rem_euclid(l);
            } else if v < 0 || v >= l {
                return None;
            }
            c[k] = v as usize;
        }
        Some(self.site_at(&c))
    }

    /// Per-axis displacement `b - a`, reduced modulo the axis length.
    pub fn displacement(&self, a: usize, b: usize) -> Vec<usize> {
        let ca = self.coords(a);
        let cb = self.coords(b);
        (0..self.dimension())
            .map(|k| {
                let l = self.lengths[k] as i64;
                (cb[k] as i64 - ca[k] as i64).rem_euclid(l) as usize
            })
            .collect()
    }

    /// Number of lattice steps separating two sites.
    pub fn graph_distance(&self, a: usize, b: usize) -> usize {
        let ca = self.coords(a);
        let cb = self.coords(b);
        (0..self.dimension())
            .map(|k| {
                let d = ca[k].abs_diff(cb[k]);
                if self.pbc[k] {
                    d.min(self.lengths[k] - d)
                } else {
                    d
                }
            })
            .sum()
    }

    /// Point-group elements that map the lattice onto itself: reflections of
    /// every axis, plus axis exchange when the lattice is square.
    pub fn point_group(&self) -> Vec<PointOp> {
        match self.dimension() {
            1 => vec![
                PointOp { perm: vec![0], sign: vec![1] },
                PointOp { perm: vec![0], sign: vec![-1] },
            ],
            _ => {
                let mut perms = vec![vec![0, 1]];
                if self.lengths[0] == self.lengths[1] {
                    perms.push(vec![1, 0]);
                }
                let mut ops = Vec::new();
                for perm in perms {
                    for s0 in [1, -1] {
                        for s1 in [1, -1] {
                            ops.push(PointOp { perm: perm.clone(), sign: vec![s0, s1] });
                        }
                    }
                }
                ops
            }
        }
    }

    /// Canonical representative of the displacement orbit of the pair `(a, b)`
    /// under translations and the point group: every component is wrapped
    /// into `[0, L/2]` and, among the admissible images, the lexicographically
    /// largest is taken (so square lattices report `(dx, dy)` with `dx >= dy`).
    pub fn displacement_class(&self, a: usize, b: usize) -> Result<Vec<usize>> {
        if a == b {
            return Err(WgsError::InvalidArgument(
                "displacement class of a site with itself".into(),
            ));
        }
        if a >= self.num_sites() || b >= self.num_sites() {
            return Err(WgsError::InvalidArgument(format!("site out of range: ({a}, {b})")));
        }
        if !self.fully_periodic() {
            return Err(WgsError::SymmetryRequiresPbc { mode: "displacement class".into() });
        }
        Ok(self.canonical_displacement(&self.displacement(a, b)))
    }

    fn canonical_displacement(&self, d: &[usize]) -> Vec<usize> {
        let dim = self.dimension();
        let mut best: Option<Vec<usize>> = None;
        for op in self.point_group() {
            let img: Vec<usize> = (0..dim)
                .map(|k| {
                    let l = self.lengths[k] as i64;
                    (op.sign[k] * d[op.perm[k]] as i64).rem_euclid(l) as usize
                })
                .collect();
            if img.iter().zip(&self.lengths).all(|(&c, &l)| c <= l / 2)
                && best.as_ref().is_none_or(|b| img > *b)
            {
                best = Some(img);
            }
        }
        best.expect("axis reflections always give an image inside the half-box")
    }

    fn enumerate_bonds(&self) -> Vec<Bond> {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for site in 0..self.num_sites() {
            for k in 0..self.dimension() {
                let mut offset = vec![0isize; self.dimension()];
                offset[k] = 1;
                if let Some(nb) = self.translate(site, &offset) {
                    let key = (site.min(nb), site.max(nb));
                    *counts.entry(key).or_insert(0) += 1;
                }
            }
        }
        counts
            .into_iter()
            .map(|((a, b), multiplicity)| Bond { a, b, multiplicity })
            .collect()
    }
}

fn coordination_of(n: usize, bonds: &[Bond]) -> Vec<usize> {
    let mut z = vec![0; n];
    for b in bonds {
        z[b.a] += b.multiplicity;
        z[b.b] += b.multiplicity;
    }
    z
}

/// How site pairs share phase matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhaseMode {
    /// One phase matrix per unordered pair.
    None,
    /// One per lattice-symmetry orbit of pairs.
    Orbit,
    /// One per graph distance.
    Distance,
    /// Orbit mode, with all pairs farther apart than `max_distance` frozen at zero phase.
    Cutoff { max_distance: usize },
}

impl PhaseMode {
    pub fn name(&self) -> String {
        match self {
            PhaseMode::None => "none".into(),
            PhaseMode::Orbit => "orbit".into(),
            PhaseMode::Distance => "distance".into(),
            PhaseMode::Cutoff { max_distance } => format!("cutoff({max_distance})"),
        }
    }

    /// Whether the shared matrices must be symmetric in their level indices.
    pub fn symmetric(&self) -> bool {
        !matches!(self, PhaseMode::None)
    }
}

/// Assignment of a phase-matrix index to every unordered pair of distinct sites.
///
/// `index(a, b)` is `None` for pairs whose phases are frozen at zero (cutoff
/// mode). In [`PhaseMode::None`] the matrix for pair `(a, b)` with `a < b` is
/// stored with the level of `a` as its first index; see [`PhaseIndexMap::oriented`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseIndexMap {
    mode: PhaseMode,
    n_sites: usize,
    table: Vec<Option<u32>>,
    count: usize,
    labels: Vec<Vec<usize>>,
}

impl PhaseIndexMap {
    pub fn build(g: &Geometry, mode: PhaseMode) -> Result<Self> {
        let n = g.num_sites();
        if mode.symmetric() && !g.fully_periodic() {
            return Err(WgsError::SymmetryRequiresPbc { mode: mode.name() });
        }
        let mut table = vec![None; n * n];
        let mut labels = Vec::new();
        match mode {
            PhaseMode::None => {
                let mut idx = 0u32;
                for a in 0..n {
                    for b in a + 1..n {
                        table[a * n + b] = Some(idx);
                        table[b * n + a] = Some(idx);
                        idx += 1;
                    }
                }
            }
            PhaseMode::Orbit | PhaseMode::Distance | PhaseMode::Cutoff { .. } => {
                // Class key per pair: canonical displacement, or just the distance.
                let key_of = |a: usize, b: usize| -> (usize, Vec<usize>) {
                    let d = g.canonical_displacement(&g.displacement(a, b));
                    let dist: usize = d.iter().sum();
                    match mode {
                        PhaseMode::Distance => (dist, vec![dist]),
                        _ => (dist, d),
                    }
                };
                let mut keys: BTreeMap<(usize, Vec<usize>), Option<u32>> = BTreeMap::new();
                for a in 0..n {
                    for b in a + 1..n {
                        keys.insert(key_of(a, b), None);
                    }
                }
                let mut next = 0u32;
                for ((dist, label), slot) in keys.iter_mut() {
                    let frozen = matches!(mode, PhaseMode::Cutoff { max_distance } if *dist > max_distance);
                    if !frozen {
                        *slot = Some(next);
                        labels.push(label.clone());
                        next += 1;
                    }
                }
                for a in 0..n {
                    for b in a + 1..n {
                        let idx = keys[&key_of(a, b)];
                        table[a * n + b] = idx;
                        table[b * n + a] = idx;
                    }
                }
            }
        }
        let count = match mode {
            PhaseMode::None => n * (n - 1) / 2,
            _ => labels.len(),
        };
        Ok(PhaseIndexMap { mode, n_sites: n, table, count, labels })
    }

    pub fn mode(&self) -> PhaseMode {
        self.mode
    }

    pub fn num_sites(&self) -> usize {
        self.n_sites
    }

    /// Total number of phase matrices `R`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn symmetric(&self) -> bool {
        self.mode.symmetric()
    }

    pub fn index(&self, a: usize, b: usize) -> Option<usize> {
        if a == b {
            return None;
        }
        self.table[a * self.n_sites + b].map(|i| i as usize)
    }

    /// Index plus a flag telling whether the stored matrix must be transposed
    /// to read it with the level of `a` first.
    #[inline]
    pub fn oriented(&self, a: usize, b: usize) -> Option<(usize, bool)> {
        self.index(a, b)
            .map(|i| (i, !self.symmetric() && a > b))
    }

    /// Canonical displacement (or distance) label of each index in the
    /// symmetric modes; empty in [`PhaseMode::None`].
    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }
}

/// Closed-form count `½⌊L/2⌋(⌊L/2⌋−1)` sometimes quoted for the `L×L` torus,
/// kept only for comparison against the enumerated orbit count.
pub fn square_torus_reference_count(l: usize) -> usize {
    let h = l / 2;
    h * h.saturating_sub(1) / 2
}
