//! Winding and Chern numbers: Diophantine solution, a Brillouin-zone lattice
//! field-strength oracle, extraction from flux-pumping scans, and the
//! spectral flow of the lattice Hamiltonian itself.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::AlphaScan;
use crate::error::{Error, Result};
use crate::lattice::{gcd, Hamiltonian, LatticeSpec};
use crate::linalg;
use crate::peaks;
use crate::spectrum::{diagonalize, ClassifyParams, ModeClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindingRecord {
    pub p: u32,
    pub q: u32,
    pub h: u32,
    pub s: i64,
    pub t: i64,
    /// `|t| = q/2`: both signs solve the constraint.
    pub degenerate: bool,
}

impl WindingRecord {
    /// The same gap with a chosen branch of a degenerate pair.
    pub fn with_branch(&self, t: i64) -> Result<Self> {
        let num = self.h as i64 - t * self.p as i64;
        if num % self.q as i64 != 0 {
            return Err(Error::InvalidArgument(format!(
                "t = {t} does not solve gap {} of q = {}",
                self.h, self.q
            )));
        }
        Ok(WindingRecord {
            s: num / self.q as i64,
            t,
            degenerate: false,
            ..*self
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChernRecord {
    pub band: u32,
    pub chern: i64,
}

/// Solve `h = s q + t p` with `|t| <= q/2`.
pub fn diophantine_winding(p: u32, q: u32, h: u32) -> Result<WindingRecord> {
    if q == 0 || gcd(p as u64, q as u64) != 1 {
        return Err(Error::InvalidArgument(format!(
            "p = {p} and q = {q} must be coprime"
        )));
    }
    if h == 0 || h >= q {
        return Err(Error::InvalidArgument(format!(
            "gap index {h} outside 1..{}",
            q - 1
        )));
    }
    let (pi, qi, hi) = (p as i64, q as i64, h as i64);
    let t = (-qi / 2..=qi / 2)
        .find(|t| (hi - t * pi).rem_euclid(qi) == 0)
        .expect("p invertible mod q");
    let degenerate = 2 * t.abs() == qi;
    let t = if degenerate { t.abs() } else { t };
    Ok(WindingRecord {
        p,
        q,
        h,
        s: (hi - t * pi) / qi,
        t,
        degenerate,
    })
}

pub fn all_windings(p: u32, q: u32) -> Result<Vec<WindingRecord>> {
    (1..q).map(|h| diophantine_winding(p, q, h)).collect()
}

/// `C_h = t_h - t_{h-1}` with `t_0 = t_q = 0`, for the requested bands.
pub fn chern_from_windings(windings: &[WindingRecord], bands: &[u32]) -> Result<Vec<ChernRecord>> {
    let first = windings
        .first()
        .ok_or_else(|| Error::InvalidArgument("no windings".into()))?;
    let (p, q) = (first.p, first.q);
    let mut t: Vec<Option<WindingRecord>> = vec![None; q as usize + 1];
    for w in windings {
        if (w.p, w.q) != (p, q) || w.h == 0 || w.h >= q || t[w.h as usize].is_some() {
            return Err(Error::InvalidArgument(format!(
                "inconsistent winding set at gap {}",
                w.h
            )));
        }
        t[w.h as usize] = Some(*w);
    }
    let value = |h: u32| -> Result<i64> {
        if h == 0 || h == q {
            return Ok(0);
        }
        let w = t[h as usize].ok_or_else(|| Error::InvalidArgument(format!("missing gap {h}")))?;
        if w.degenerate {
            return Err(Error::DegenerateWinding { h, q });
        }
        Ok(w.t)
    };
    bands
        .iter()
        .map(|&b| {
            if b == 0 || b > q {
                return Err(Error::InvalidArgument(format!("band {b} outside 1..{q}")));
            }
            Ok(ChernRecord {
                band: b,
                chern: value(b)? - value(b - 1)?,
            })
        })
        .collect()
}

/// `q x q` Bloch Hamiltonian of the magnetic unit cell, same conventions as
/// the real-space lattice (vertical hop `(x, y) -> (x, y+1)` carries `x phi`).
pub fn harper(p: u32, q: u32, kx: f64, ky: f64) -> Array2<Complex64> {
    let phi = 2.0 * PI * p as f64 / q as f64;
    let n = q as usize;
    let mut m = Array2::zeros((n, n));
    for x in 0..n {
        m[[x, x]] += Complex64::new(2.0 * (ky + (x + 1) as f64 * phi).cos(), 0.0);
        if x + 1 < n {
            m[[x + 1, x]] += Complex64::new(1.0, 0.0);
            m[[x, x + 1]] += Complex64::new(1.0, 0.0);
        }
    }
    m[[0, n - 1]] += Complex64::from_polar(1.0, kx);
    m[[n - 1, 0]] += Complex64::from_polar(1.0, -kx);
    m
}

/// Minimum gap below which two bands count as touching.
pub const TOUCHING: f64 = 1e-6;

struct BlochGrid {
    n: usize,
    energies: Vec<Vec<f64>>,
    states: Vec<Array2<Complex64>>,
}

fn bloch_grid(p: u32, q: u32, grid: usize) -> Result<BlochGrid> {
    let pts: Vec<(usize, usize)> = (0..grid)
        .flat_map(|i| (0..grid).map(move |j| (i, j)))
        .collect();
    let solved: Vec<Result<(Vec<f64>, Array2<Complex64>)>> = pts
        .par_iter()
        .map(|&(i, j)| {
            let k = |i: usize| 2.0 * PI * i as f64 / grid as f64;
            let (e, v) = linalg::eigh(&harper(p, q, k(i), k(j)))?;
            Ok((e.to_vec(), v))
        })
        .collect();
    let mut energies = Vec::with_capacity(pts.len());
    let mut states = Vec::with_capacity(pts.len());
    for s in solved {
        let (e, v) = s?;
        energies.push(e);
        states.push(v);
    }
    Ok(BlochGrid {
        n: grid,
        energies,
        states,
    })
}

/// Bands (1-based) that touch a neighbour somewhere on the grid.
fn touching(g: &BlochGrid, q: usize) -> Vec<bool> {
    let mut t = vec![false; q];
    for e in &g.energies {
        for b in 0..q.saturating_sub(1) {
            if e[b + 1] - e[b] < TOUCHING {
                t[b] = true;
                t[b + 1] = true;
            }
        }
    }
    t
}

/// Bands that touch a neighbour on a `grid x grid` Brillouin-zone mesh.
pub fn touching_bands(p: u32, q: u32, grid: usize) -> Result<Vec<u32>> {
    let p = if q == 0 { 0 } else { p };
    let g = bloch_grid(p, q.max(1), grid)?;
    Ok(touching(&g, q.max(1) as usize)
        .iter()
        .enumerate()
        .filter(|(_, &t)| t)
        .map(|(b, _)| b as u32 + 1)
        .collect())
}

/// Lattice field-strength Chern numbers of the requested bands.
pub fn chern_fhs_bands(p: u32, q: u32, grid: usize, bands: &[u32]) -> Result<Vec<ChernRecord>> {
    if grid < 6 {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} below 6 points per direction"
        )));
    }
    let (p, q) = if p == 0 { (0, 1) } else { (p, q) };
    if gcd(p as u64, q as u64) != 1 {
        return Err(Error::InvalidArgument(format!(
            "p = {p} and q = {q} must be coprime"
        )));
    }
    let g = bloch_grid(p, q, grid)?;
    let touch = touching(&g, q as usize);
    let n = g.n;
    let at = |i: usize, j: usize| &g.states[(i % n) * n + (j % n)];
    let link = |a: &Array2<Complex64>, b: &Array2<Complex64>, band: usize| -> Complex64 {
        a.column(band)
            .iter()
            .zip(b.column(band))
            .fold(Complex64::new(0.0, 0.0), |s, (x, y)| s + x.conj() * y)
    };
    bands
        .iter()
        .map(|&band| {
            if band == 0 || band > q {
                return Err(Error::InvalidArgument(format!(
                    "band {band} outside 1..{q}"
                )));
            }
            let b = band as usize - 1;
            if touch[b] {
                return Err(Error::BandTouching(format!(
                    "band {band} of p/q = {p}/{q} touches a neighbour"
                )));
            }
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let u1 = link(at(i, j), at(i + 1, j), b);
                    let u2 = link(at(i + 1, j), at(i + 1, j + 1), b);
                    let u3 = link(at(i, j + 1), at(i + 1, j + 1), b);
                    let u4 = link(at(i, j), at(i, j + 1), b);
                    total += (u1 * u2 / (u3 * u4)).arg();
                }
            }
            Ok(ChernRecord {
                band,
                chern: (total / (2.0 * PI)).round() as i64,
            })
        })
        .collect()
}

pub fn chern_fhs(p: u32, q: u32, grid: usize) -> Result<Vec<ChernRecord>> {
    let bands: Vec<u32> = if p == 0 { vec![1] } else { (1..=q).collect() };
    chern_fhs_bands(p, q, grid, &bands)
}

/// Peak detection and association settings for [`extract_winding`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingParams {
    /// Peak height over the higher flanking minimum.
    pub prominence: f64,
    /// Minimum height relative to the trace maximum.
    pub floor: f64,
    /// Largest frame-to-frame move accepted as the same peak, in units of T.
    pub max_step: f64,
}

impl Default for WindingParams {
    fn default() -> Self {
        WindingParams {
            prominence: 1.2,
            floor: 0.02,
            max_step: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingExtraction {
    pub t: i64,
    pub reference: f64,
    /// Signed crossing count per `k_P` line.
    pub per_k: Vec<i64>,
    /// Crossings that could not be associated, per `k_P` line.
    pub ambiguous: Vec<usize>,
}

/// Signed crossings of `reference` between consecutive frames.
/// Positive counts are peaks moving toward lower frequency. A peak with no
/// successor within `max_step` is ambiguous when its nearest successor lies
/// across the reference and has no predecessor of its own.
pub fn count_crossings(frames: &[Vec<f64>], reference: f64, max_step: f64) -> (i64, usize) {
    let mut count = 0;
    let mut ambiguous = 0;
    for pair in frames.windows(2) {
        for &x in &pair[0] {
            let Some(&y) = pair[1]
                .iter()
                .min_by(|a, b| (*a - x).abs().total_cmp(&(*b - x).abs()))
            else {
                continue;
            };
            let crosses =
                (x - reference) * (y - reference) < 0.0 || y == reference || x == reference;
            if (y - x).abs() > max_step {
                // Only a newly appeared peak could be this one after a jump.
                let tracked = pair[0].iter().any(|&z| (z - y).abs() <= max_step);
                if crosses && !tracked {
                    ambiguous += 1;
                }
                continue;
            }
            if y < reference && reference <= x {
                count += 1;
            } else if x < reference && reference <= y {
                count -= 1;
            }
        }
    }
    (count, ambiguous)
}

/// Winding number of the gap spanned by the scan's frequency grid.
///
/// Each `k_P` line is counted separately at the grid midpoint. A channel that
/// is dark at some `k_P` can only remove crossings, so the reported value is
/// the largest-magnitude count among unambiguous lines.
pub fn extract_winding(scan: &AlphaScan, params: &WindingParams) -> Result<WindingExtraction> {
    if scan.alpha.len() < 2 || scan.omega.len() < 3 {
        return Err(Error::InvalidArgument(
            "scan needs at least two alpha frames and three frequencies".into(),
        ));
    }
    let reference = 0.5 * (scan.omega[0] + scan.omega[scan.omega.len() - 1]);
    let mut per_k = Vec::with_capacity(scan.k_p.len());
    let mut ambiguous = Vec::with_capacity(scan.k_p.len());
    for ik in 0..scan.k_p.len() {
        let frames: Vec<Vec<f64>> = (0..scan.alpha.len())
            .map(|ia| {
                peaks::find_prominent(
                    &scan.omega,
                    scan.trace(ia, ik),
                    params.prominence,
                    params.floor,
                )
                .into_iter()
                .map(|p| p.location)
                .collect()
            })
            .collect();
        let (c, a) = count_crossings(&frames, reference, params.max_step);
        per_k.push(c);
        ambiguous.push(a);
    }
    let clean: Vec<i64> = per_k
        .iter()
        .zip(&ambiguous)
        .filter(|(_, &a)| a == 0)
        .map(|(&c, _)| c)
        .collect();
    if clean.is_empty() {
        return Err(Error::AmbiguousPeaks(
            "every k_P line has crossings that cannot be associated; refine the alpha grid".into(),
        ));
    }
    if clean.iter().any(|&c| c > 0) && clean.iter().any(|&c| c < 0) {
        return Err(Error::AmbiguousPeaks(format!(
            "k_P lines disagree on the crossing direction: {clean:?}"
        )));
    }
    let t = clean.iter().copied().max_by_key(|c| c.abs()).unwrap_or(0);
    Ok(WindingExtraction {
        t,
        reference,
        per_k,
        ambiguous,
    })
}

/// Edge-resolved spectral flow of the lattice Hamiltonian through `reference`
/// as the vacancy flux goes once around, `+1` per level moving down.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralFlow {
    pub outer: i64,
    pub inner: i64,
    pub bulk: i64,
}

/// Counts levels below `reference` on `frames` evenly spaced vacancy fluxes
/// over `[0, 2pi]` and classifies the levels that crossed. Frames must be
/// fine enough that opposite crossings never share a step.
pub fn spectral_flow(
    template: &LatticeSpec,
    reference: f64,
    frames: usize,
    params: &ClassifyParams,
) -> Result<SpectralFlow> {
    if frames < 2 {
        return Err(Error::InvalidArgument(
            "spectral flow needs at least two frames".into(),
        ));
    }
    let alpha: Vec<f64> = (0..frames)
        .map(|i| 2.0 * PI * i as f64 / (frames - 1) as f64)
        .collect();
    let below: Vec<usize> = alpha
        .par_iter()
        .map(|&a| {
            let h = Hamiltonian::build(&template.with_alpha(a), None)?;
            Ok(linalg::eigvalsh(&h.matrix)?
                .iter()
                .filter(|&&e| e < reference)
                .count())
        })
        .collect::<Result<_>>()?;
    let mut flow = SpectralFlow::default();
    for i in 1..frames {
        let (n0, n1) = (below[i - 1], below[i]);
        if n0 == n1 {
            continue;
        }
        let h = Hamiltonian::build(&template.with_alpha(alpha[i]), None)?;
        let modes = diagonalize(&h, params)?;
        let sign = if n1 > n0 { 1 } else { -1 };
        for k in n0.min(n1)..n0.max(n1) {
            match modes.classes[k] {
                ModeClass::OuterEdge => flow.outer += sign,
                ModeClass::InnerEdge => flow.inner += sign,
                ModeClass::Bulk => flow.bulk += sign,
            }
        }
    }
    Ok(flow)
}
