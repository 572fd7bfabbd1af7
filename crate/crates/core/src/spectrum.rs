//! Full diagonalization, Hofstadter butterflies, gap location and mode
//! classification.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{gcd, Flux, Hamiltonian, LatticeSpec, Region, RegionDepth};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeClass {
    #[serde(rename = "OESM")]
    OuterEdge,
    #[serde(rename = "IESM")]
    InnerEdge,
    #[serde(rename = "BSM")]
    Bulk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub depth: RegionDepth,
    pub threshold: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            depth: RegionDepth::default(),
            threshold: 0.5,
        }
    }
}

/// Region weights of one mode: `[outer, inner, bulk]`.
pub type Weights = [f64; 3];

#[derive(Clone, Debug)]
pub struct ModeSet {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<Complex64>,
    pub classes: Vec<ModeClass>,
    pub weights: Vec<Weights>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn bulk_energies(&self) -> Vec<f64> {
        self.classes
            .iter()
            .zip(&self.eigenvalues)
            .filter(|(c, _)| **c == ModeClass::Bulk)
            .map(|(_, &e)| e)
            .collect()
    }

    /// Indices of modes with energy strictly inside `(lo, hi)`.
    pub fn in_window(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.eigenvalues[i] > lo && self.eigenvalues[i] < hi)
            .collect()
    }

    /// `max_i |B v_i - E_i v_i|`.
    pub fn residual(&self, h: &Hamiltonian) -> f64 {
        let bv = h.matrix.dot(&self.eigenvectors);
        let mut worst: f64 = 0.0;
        for (i, &e) in self.eigenvalues.iter().enumerate() {
            let r: f64 = bv
                .column(i)
                .iter()
                .zip(self.eigenvectors.column(i))
                .map(|(a, v)| (a - v * e).norm_sqr())
                .sum();
            worst = worst.max(r.sqrt());
        }
        worst
    }

    /// `max |V^H V - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let v = &self.eigenvectors;
        let g = v.t().mapv(|z| z.conj()).dot(v);
        let mut worst: f64 = 0.0;
        for ((i, j), z) in g.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((z - target).norm());
        }
        worst
    }
}

pub fn region_weights(vector: ndarray::ArrayView1<Complex64>, regions: &[Region]) -> Weights {
    let mut w = [0.0; 3];
    for (z, r) in vector.iter().zip(regions) {
        let k = match r {
            Region::Outer => 0,
            Region::Inner => 1,
            Region::Bulk => 2,
        };
        w[k] += z.norm_sqr();
    }
    w
}

pub fn classify(w: &Weights, threshold: f64) -> ModeClass {
    if w[0] > threshold {
        ModeClass::OuterEdge
    } else if w[1] > threshold {
        ModeClass::InnerEdge
    } else {
        ModeClass::Bulk
    }
}

pub fn diagonalize(h: &Hamiltonian, params: &ClassifyParams) -> Result<ModeSet> {
    let (eigenvalues, eigenvectors) = linalg::eigh(&h.matrix)?;
    let regions = params.depth.regions(&h.spec, &h.index);
    let weights: Vec<Weights> = (0..eigenvalues.len())
        .map(|i| region_weights(eigenvectors.column(i), &regions))
        .collect();
    let classes = weights
        .iter()
        .map(|w| classify(w, params.threshold))
        .collect();
    Ok(ModeSet {
        eigenvalues,
        eigenvectors,
        classes,
        weights,
    })
}

/// Which flux values a butterfly sweep visits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxGrid {
    /// Every coprime `p / q` in `[0, 1)` with `q <= q_max`.
    Rational { q_max: u32 },
    /// `n` uniform points of `phi / 2pi` in `[0, 1)`.
    Uniform { n: u32 },
}

impl FluxGrid {
    pub fn fluxes(&self) -> Vec<Flux> {
        match *self {
            FluxGrid::Rational { q_max } => {
                let mut v: Vec<(u32, u32)> = (1..=q_max)
                    .flat_map(|q| (0..q).map(move |p| (p, q)))
                    .filter(|&(p, q)| gcd(p as u64, q as u64) == 1)
                    .collect();
                v.sort_by(|a, b| (a.0 as u64 * b.1 as u64).cmp(&(b.0 as u64 * a.1 as u64)));
                v.into_iter()
                    .map(|(p, q)| Flux::Rational { p, q })
                    .collect()
            }
            FluxGrid::Uniform { n } => (0..n)
                .map(|k| Flux::Angle(2.0 * std::f64::consts::PI * k as f64 / n as f64))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterflyRow {
    pub phi: f64,
    pub index: usize,
    pub energy: f64,
}

/// Full spectrum at every flux of the grid, rows sorted by `phi` then energy.
pub fn butterfly(template: &LatticeSpec, grid: FluxGrid) -> Result<Vec<ButterflyRow>> {
    if let FluxGrid::Rational { q_max } = grid {
        if q_max < 1 {
            return Err(Error::InvalidArgument("q_max must be at least 1".into()));
        }
    }
    let fluxes = grid.fluxes();
    let columns: Vec<Result<Vec<ButterflyRow>>> = fluxes
        .par_iter()
        .map(|&flux| {
            let spec = template.with_flux(flux);
            let h = Hamiltonian::build(&spec, None)?;
            let e = linalg::eigvalsh(&h.matrix)?;
            let phi = flux.phi();
            Ok(e.iter()
                .enumerate()
                .map(|(index, &energy)| ButterflyRow { phi, index, energy })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for c in columns {
        rows.extend(c?);
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub h: u32,
    pub lower: f64,
    pub upper: f64,
    pub closed: bool,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn centre(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// The gap shrunk by `fraction` of its width on each side.
    pub fn interior(&self, fraction: f64) -> (f64, f64) {
        let d = fraction * self.width();
        (self.lower + d, self.upper - d)
    }

    pub fn contains(&self, e: f64) -> bool {
        e > self.lower && e < self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub p: u32,
    pub q: u32,
    pub gaps: Vec<Gap>,
}

impl GapTable {
    pub fn gap(&self, h: u32) -> Option<&Gap> {
        self.gaps.iter().find(|g| g.h == h)
    }
}

/// Default width below which a gap is reported closed, in units of T.
pub const CLOSED_GAP: f64 = 0.2;

/// Bulk band gaps from BSM energies only.
///
/// For gap `h` the BSMs are sorted and the largest spacing is searched in a
/// window centred on the `h / q` filling fraction, half a band wide.
pub fn find_gaps(modes: &ModeSet, p: u32, q: u32, closed_below: f64) -> Result<GapTable> {
    if q == 0 || gcd(p as u64, q as u64) != 1 {
        return Err(Error::InvalidArgument(format!(
            "p = {p}, q = {q} must be coprime with q > 0"
        )));
    }
    let mut bulk = modes.bulk_energies();
    if 2 * bulk.len() < modes.len() {
        return Err(Error::Classification(format!(
            "only {} of {} modes classified as bulk",
            bulk.len(),
            modes.len()
        )));
    }
    bulk.sort_by(f64::total_cmp);
    let n = bulk.len();
    let half = (n / (2 * q as usize)).max(1);
    let mut gaps = Vec::new();
    for h in 1..q {
        let c = ((h as f64 * n as f64) / q as f64).round() as usize;
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(n - 1);
        let (mut best, mut at) = (f64::NEG_INFINITY, lo);
        for i in lo..hi {
            let d = bulk[i + 1] - bulk[i];
            if d > best {
                best = d;
                at = i;
            }
        }
        let (lower, upper) = (bulk[at], bulk[at + 1]);
        gaps.push(Gap {
            h,
            lower,
            upper,
            closed: upper - lower < closed_below,
        });
    }
    Ok(GapTable { p, q, gaps })
}
