//! Driven-dissipative steady states and the pumping protocols.
//!
//! The field obeys `i da/dt = (B - Omega - iK/2) a + P`, so the steady state is
//! `a = -(B - Omega - iK/2)^-1 P`. Two solvers are provided: a direct LU solve
//! per detuning, and a spectral one that diagonalizes `A = B - iK/2` once and
//! reuses it for every detuning and pump vector.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeInto, Solve};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Coord, DisorderSpec, Hamiltonian, LatticeSpec, SiteIndex};
use crate::linalg::{self, EigenSystem};
use crate::peaks::{self, Peak};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Relative residual accepted from any solve.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Loss rates used to build a per-site decay vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub regular: f64,
    pub pump: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            regular: 0.01,
            pump: 0.2,
        }
    }
}

impl DecayParams {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, k) in [("regular", self.regular), ("pump", self.pump)] {
            if !(k.is_finite() && k > 0.0) {
                out.push(format!(
                    "decay rate {name} must be strictly positive, got {k}"
                ));
            }
        }
        out
    }

    pub fn build(&self, index: &SiteIndex, pumped: &[Coord]) -> Result<DecaySpec> {
        let mut kappa = vec![self.regular; index.len()];
        for &c in pumped {
            kappa[index.require(c)?] = self.pump;
        }
        DecaySpec::new(kappa)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    kappa: Vec<f64>,
}

impl DecaySpec {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if let Some(k) = kappa.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "decay rates must be strictly positive, got {k}"
            )));
        }
        Ok(DecaySpec { kappa })
    }

    pub fn uniform(n: usize, kappa: f64) -> Result<Self> {
        Self::new(vec![kappa; n])
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn min(&self) -> f64 {
        self.kappa.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub entries: Vec<(Coord, Complex64)>,
    pub omega: f64,
}

impl PumpSpec {
    pub fn single(site: Coord, strength: f64, omega: f64) -> Self {
        PumpSpec {
            entries: vec![(site, Complex64::new(strength, 0.0))],
            omega,
        }
    }

    /// Equal amplitudes with phase `-j * k_p` on the `j`-th site, `j = 1..m`.
    pub fn gradient(sites: &[Coord], strength: f64, k_p: f64, omega: f64) -> Self {
        let entries = sites
            .iter()
            .enumerate()
            .map(|(j, &c)| (c, Complex64::from_polar(strength, -((j + 1) as f64) * k_p)))
            .collect();
        PumpSpec { entries, omega }
    }

    pub fn sites(&self) -> Vec<Coord> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn vector(&self, index: &SiteIndex) -> Result<Array1<Complex64>> {
        let mut p = Array1::zeros(index.len());
        for &(c, a) in &self.entries {
            p[index.require(c)?] += a;
        }
        Ok(p)
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub amplitudes: Array1<Complex64>,
    pub photon_numbers: Vec<f64>,
    pub residual: f64,
}

impl SteadyState {
    fn from_amplitudes(amplitudes: Array1<Complex64>, residual: f64) -> Self {
        let photon_numbers = amplitudes.iter().map(|z| z.norm_sqr()).collect();
        SteadyState {
            amplitudes,
            photon_numbers,
            residual,
        }
    }

    pub fn total(&self) -> f64 {
        self.photon_numbers.iter().sum()
    }
}

/// `A = B - iK/2`.
pub fn dynamical_matrix(h: &Hamiltonian, decay: &DecaySpec) -> Result<Array2<Complex64>> {
    if decay.kappa.len() != h.dim() {
        return Err(Error::Dimension(format!(
            "decay vector has {} entries for {} sites",
            decay.kappa.len(),
            h.dim()
        )));
    }
    let mut a = h.matrix.clone();
    for (i, k) in decay.kappa.iter().enumerate() {
        a[[i, i]] -= Complex64::new(0.0, 0.5 * k);
    }
    Ok(a)
}

/// `||(A - Omega) x + P||`.
pub fn residual(
    a: &Array2<Complex64>,
    omega: f64,
    x: &Array1<Complex64>,
    p: &Array1<Complex64>,
) -> f64 {
    let mut r = a.dot(x);
    r.zip_mut_with(x, |ri, xi| *ri -= xi * omega);
    r += p;
    linalg::norm(&r)
}

fn check_residual(res: f64, p: &Array1<Complex64>) -> Result<()> {
    let scale = linalg::norm(p).max(f64::MIN_POSITIVE);
    if res <= RESIDUAL_TOL * scale || res == 0.0 {
        Ok(())
    } else {
        Err(Error::Linalg(format!(
            "steady-state residual {res:.3e} exceeds {RESIDUAL_TOL:e} x |P| = {scale:.3e}"
        )))
    }
}

fn shifted(a: &Array2<Complex64>, omega: f64) -> Array2<Complex64> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[[i, i]] -= omega;
    }
    m
}

/// Direct LU solve of the steady state.
pub fn steady_state(h: &Hamiltonian, pump: &PumpSpec, decay: &DecaySpec) -> Result<SteadyState> {
    let a = dynamical_matrix(h, decay)?;
    let p = pump.vector(&h.index)?;
    let mut states = solve_direct(&a, pump.omega, &[p])?;
    Ok(states.pop().expect("one right-hand side"))
}

/// LU-factorize `A - Omega` once and solve for each pump vector. Banded
/// storage is used when the lattice numbering keeps the band narrow.
pub fn solve_direct(
    a: &Array2<Complex64>,
    omega: f64,
    pumps: &[Array1<Complex64>],
) -> Result<Vec<SteadyState>> {
    let m = shifted(a, omega);
    let (kl, ku) = linalg::band_limits(&m);
    let xs = if 4 * kl.max(ku) < m.nrows() {
        linalg::solve_band(&m, kl, ku, pumps)?
    } else {
        let lu = m.factorize_into()?;
        pumps
            .iter()
            .map(|p| lu.solve(p))
            .collect::<std::result::Result<_, _>>()?
    };
    pumps
        .iter()
        .zip(xs)
        .map(|(p, x)| {
            let x = -x;
            let res = residual(a, omega, &x, p);
            check_residual(res, p)?;
            Ok(SteadyState::from_amplitudes(x, res))
        })
        .collect()
}

/// Eigendecomposition of `A` reused across detunings.
pub struct SpectralSolver {
    a: Array2<Complex64>,
    eig: EigenSystem,
}

impl SpectralSolver {
    pub fn new(h: &Hamiltonian, decay: &DecaySpec) -> Result<Self> {
        let a = dynamical_matrix(h, decay)?;
        let eig = EigenSystem::new(&a)?;
        Ok(SpectralSolver { a, eig })
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.a
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eig
    }

    /// Modal coefficients `V^-1 P`.
    pub fn coefficients(&self, p: &Array1<Complex64>) -> Array1<Complex64> {
        self.eig.inverse.dot(p)
    }

    /// Full steady state, falling back to LU if the residual is too large.
    pub fn solve(&self, omega: f64, p: &Array1<Complex64>) -> Result<SteadyState> {
        let x = self
            .eig
            .vectors
            .dot(&self.weights(omega, &self.coefficients(p)));
        let res = residual(&self.a, omega, &x, p);
        if check_residual(res, p).is_ok() {
            return Ok(SteadyState::from_amplitudes(x, res));
        }
        Ok(solve_direct(&self.a, omega, std::slice::from_ref(p))?
            .pop()
            .expect("one right-hand side"))
    }

    fn weights(&self, omega: f64, c: &Array1<Complex64>) -> Array1<Complex64> {
        c.iter()
            .zip(&self.eig.values)
            .map(|(c, l)| -c / (l - omega))
            .collect()
    }

    /// Amplitudes on the rows `rows` only, from precomputed coefficients.
    /// No residual check; callers validate with [`SpectralSolver::solve`].
    pub fn rows(&self, omega: f64, c: &Array1<Complex64>, rows: &[usize]) -> Vec<Complex64> {
        let w = self.weights(omega, c);
        rows.iter()
            .map(|&r| {
                self.eig
                    .vectors
                    .row(r)
                    .iter()
                    .zip(&w)
                    .fold(C0, |acc, (v, w)| acc + v * w)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Direct,
    #[default]
    Spectral,
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidArgument(format!("empty axis: {name}")));
    }
    if g.iter().any(|v| !v.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Uniform grid `lo, lo + step, ...` up to and including `hi` (within rounding).
pub fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// `n` points over `[0, 2pi)`.
pub fn k_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectroScan {
    pub site: Coord,
    pub strength: f64,
    pub omega: Vec<f64>,
    pub n_sp: Vec<f64>,
    pub peaks: Vec<Peak>,
}

/// Single-site pump spectroscopy: `n_SP(Omega)` on the pumped site.
pub fn spectro_scan(
    h: &Hamiltonian,
    site: Coord,
    strength: f64,
    omega_grid: &[f64],
    decay: &DecaySpec,
    solver: Solver,
) -> Result<SpectroScan> {
    check_grid("omega", omega_grid)?;
    let row = h.index.require(site)?;
    let p = PumpSpec::single(site, strength, 0.0).vector(&h.index)?;
    let n_sp: Vec<f64> = match solver {
        Solver::Direct => {
            let a = dynamical_matrix(h, decay)?;
            omega_grid
                .par_iter()
                .map(|&w| Ok(solve_direct(&a, w, std::slice::from_ref(&p))?[0].photon_numbers[row]))
                .collect::<Result<_>>()?
        }
        Solver::Spectral => {
            let s = SpectralSolver::new(h, decay)?;
            let c = s.coefficients(&p);
            // Full residuals on a sample; a single failure sends the scan to LU.
            let n = omega_grid.len();
            let sampled: Vec<usize> = (0..n).step_by(64).chain([n / 2, n - 1]).collect();
            let trusted = sampled.par_iter().all(|&i| {
                let w = omega_grid[i];
                let x = s.eig.vectors.dot(&s.weights(w, &c));
                check_residual(residual(&s.a, w, &x, &p), &p).is_ok()
            });
            if trusted {
                omega_grid
                    .par_iter()
                    .map(|&w| s.rows(w, &c, &[row])[0].norm_sqr())
                    .collect()
            } else {
                return spectro_scan(h, site, strength, omega_grid, decay, Solver::Direct);
            }
        }
    };
    let peaks = peaks::find_peaks(omega_grid, &n_sp);
    Ok(SpectroScan {
        site,
        strength,
        omega: omega_grid.to_vec(),
        n_sp,
        peaks,
    })
}

/// Sites must form a straight run of nearest neighbours.
pub fn check_consecutive(sites: &[Coord]) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::NonConsecutive("no sites".into()));
    }
    let step = |a: Coord, b: Coord| (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64);
    if sites.len() >= 2 {
        let d0 = step(sites[0], sites[1]);
        if d0.0.abs() + d0.1.abs() != 1 {
            return Err(Error::NonConsecutive(format!(
                "{:?} and {:?} are not neighbours",
                sites[0], sites[1]
            )));
        }
        for w in sites.windows(2) {
            if step(w[0], w[1]) != d0 {
                return Err(Error::NonConsecutive(format!(
                    "{:?} -> {:?} breaks the run",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentumScan {
    pub sites: Vec<Coord>,
    pub strength: f64,
    pub omega: f64,
    pub k_p: Vec<f64>,
    pub n_mp: Vec<f64>,
    /// Dominant peak; `None` when the response is flat.
    pub peak: Option<Peak>,
}

impl MomentumScan {
    pub fn m(&self) -> usize {
        self.sites.len()
    }
}

/// Relative variation below which a momentum trace counts as flat.
const FLAT: f64 = 1e-9;

/// Phase-gradient pumping of `m` consecutive sites, `n_MP(k_P)`.
pub fn momentum_scan(
    h: &Hamiltonian,
    sites: &[Coord],
    strength: f64,
    omega: f64,
    k_grid: &[f64],
    decay: &DecaySpec,
) -> Result<MomentumScan> {
    check_consecutive(sites)?;
    check_grid("k_p", k_grid)?;
    let rows: Vec<usize> = sites
        .iter()
        .map(|&c| h.index.require(c))
        .collect::<Result<_>>()?;
    let a = dynamical_matrix(h, decay)?;
    let pumps: Vec<Array1<Complex64>> = k_grid
        .iter()
        .map(|&k| PumpSpec::gradient(sites, strength, k, omega).vector(&h.index))
        .collect::<Result<_>>()?;
    let states = solve_direct(&a, omega, &pumps)?;
    let n_mp: Vec<f64> = states
        .iter()
        .map(|s| rows.iter().map(|&r| s.photon_numbers[r]).sum())
        .collect();
    let (lo, hi) = n_mp
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| {
            (l.min(v), u.max(v))
        });
    let peak = if hi - lo <= FLAT * hi.abs() {
        None
    } else {
        peaks::periodic_peak(k_grid, &n_mp, 2.0 * PI)
    };
    Ok(MomentumScan {
        sites: sites.to_vec(),
        strength,
        omega,
        k_p: k_grid.to_vec(),
        n_mp,
        peak,
    })
}

/// `n_MP` over `(alpha, k_P, Omega)` for a fixed multi-site pump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaScan {
    pub sites: Vec<Coord>,
    pub strength: f64,
    pub alpha: Vec<f64>,
    pub k_p: Vec<f64>,
    pub omega: Vec<f64>,
    /// Indexed `[alpha][k_p][omega]`, flattened.
    pub n_mp: Vec<f64>,
}

impl AlphaScan {
    pub fn trace(&self, ia: usize, ik: usize) -> &[f64] {
        let n = self.omega.len();
        let start = (ia * self.k_p.len() + ik) * n;
        &self.n_mp[start..start + n]
    }

    /// Largest relative difference between the first and last alpha frames.
    pub fn periodicity_error(&self) -> f64 {
        let last = self.alpha.len() - 1;
        let mut worst: f64 = 0.0;
        for ik in 0..self.k_p.len() {
            let (a, b) = (self.trace(0, ik), self.trace(last, ik));
            let scale = a.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs() / scale);
            }
        }
        worst
    }
}

/// Flux-pumping scan: rebuild the lattice at every `alpha` and record the
/// summed photon number on the pumped sites.
#[allow(clippy::too_many_arguments)]
pub fn alpha_scan(
    template: &LatticeSpec,
    disorder: Option<&DisorderSpec>,
    sites: &[Coord],
    strength: f64,
    alpha_grid: &[f64],
    omega_grid: &[f64],
    k_grid: &[f64],
    decay: &DecayParams,
) -> Result<AlphaScan> {
    check_grid("alpha", alpha_grid)?;
    check_grid("omega", omega_grid)?;
    check_grid("k_p", k_grid)?;
    if alpha_grid[0].abs() > 1e-12 || (alpha_grid[alpha_grid.len() - 1] - 2.0 * PI).abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "alpha grid must start at 0 and end at 2pi".into(),
        ));
    }
    check_consecutive(sites)?;
    let frames: Vec<Result<Vec<f64>>> = alpha_grid
        .par_iter()
        .map(|&alpha| {
            let h = Hamiltonian::build(&template.with_alpha(alpha), disorder)?;
            let rows: Vec<usize> = sites
                .iter()
                .map(|&c| h.index.require(c))
                .collect::<Result<_>>()?;
            let solver = SpectralSolver::new(&h, &decay.build(&h.index, sites)?)?;
            let mut out = Vec::with_capacity(k_grid.len() * omega_grid.len());
            for &k in k_grid {
                let p = PumpSpec::gradient(sites, strength, k, 0.0).vector(&h.index)?;
                // Validate the spectral route at the grid centre for every pump.
                solver.solve(omega_grid[omega_grid.len() / 2], &p)?;
                let c = solver.coefficients(&p);
                for &w in omega_grid {
                    out.push(solver.rows(w, &c, &rows).iter().map(|z| z.norm_sqr()).sum());
                }
            }
            Ok(out)
        })
        .collect();
    let mut n_mp = Vec::with_capacity(alpha_grid.len() * k_grid.len() * omega_grid.len());
    for f in frames {
        n_mp.extend(f?);
    }
    Ok(AlphaScan {
        sites: sites.to_vec(),
        strength,
        alpha: alpha_grid.to_vec(),
        k_p: k_grid.to_vec(),
        omega: omega_grid.to_vec(),
        n_mp,
    })
}

/// `sum_r kappa_r |a_r|^2` and `-2 Im(P^H a)`.
pub fn power_balance(state: &SteadyState, p: &Array1<Complex64>, decay: &DecaySpec) -> (f64, f64) {
    let lost: f64 = state
        .photon_numbers
        .iter()
        .zip(&decay.kappa)
        .map(|(n, k)| n * k)
        .sum();
    let injected = -2.0
        * p.iter()
            .zip(&state.amplitudes)
            .fold(C0, |acc, (p, a)| acc + p.conj() * a)
            .im;
    (lost, injected)
}
