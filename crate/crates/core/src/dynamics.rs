//! Coherent driven-dissipative dynamics from the vacuum and chiral transport
//! metrics.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::{self, DecaySpec, PumpSpec};
use crate::error::{Error, Result};
use crate::lattice::{Hamiltonian, Region, RegionDepth};
use crate::linalg::{self, EigenSystem};

/// Above this `max |V V^-1 - I|` the eigenbasis is treated as defective.
pub const EIGEN_CONDITION: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// Eigendecomposition, falling back to integration if ill-conditioned.
    #[default]
    Auto,
    Eigen,
    Integrate,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Array1<Complex64>>,
    /// Long-time limit.
    pub steady: Array1<Complex64>,
    pub pump: PumpSpec,
    pub kappa: Vec<f64>,
    pub method: Propagation,
}

impl Trajectory {
    pub fn photon_numbers(&self, i: usize) -> Vec<f64> {
        self.snapshots[i].iter().map(|z| z.norm_sqr()).collect()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty axis: times".into()));
    }
    if times[0] < 0.0
        || times.iter().any(|t| !t.is_finite())
        || times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::InvalidArgument(
            "times must be finite, non-negative and ascending".into(),
        ));
    }
    Ok(())
}

/// Field at each time, starting from the vacuum at `t = 0`.
pub fn evolve(
    h: &Hamiltonian,
    pump: &PumpSpec,
    decay: &DecaySpec,
    times: &[f64],
    method: Propagation,
) -> Result<Trajectory> {
    check_times(times)?;
    let a = drive::dynamical_matrix(h, decay)?;
    let p = pump.vector(&h.index)?;
    let steady = drive::solve_direct(&a, pump.omega, std::slice::from_ref(&p))?
        .remove(0)
        .amplitudes;
    let eig = match method {
        Propagation::Integrate => None,
        _ => {
            let e = EigenSystem::new(&a);
            match (method, e) {
                (Propagation::Eigen, Err(err)) => return Err(err),
                (Propagation::Eigen, Ok(e)) => Some(e),
                (_, Ok(e)) if e.inversion_error() < EIGEN_CONDITION => Some(e),
                _ => None,
            }
        }
    };
    let (snapshots, used) = match eig {
        Some(e) => (
            propagate_eigen(&e, pump.omega, &steady, times),
            Propagation::Eigen,
        ),
        None => (
            integrate(&a, pump.omega, &p, times, 1e-10)?,
            Propagation::Integrate,
        ),
    };
    Ok(Trajectory {
        times: times.to_vec(),
        snapshots,
        steady,
        pump: pump.clone(),
        kappa: decay.kappa().to_vec(),
        method: used,
    })
}

/// `x(t) = x_ss - V exp(-i(Lambda - Omega) t) V^-1 x_ss`.
fn propagate_eigen(
    e: &EigenSystem,
    omega: f64,
    steady: &Array1<Complex64>,
    times: &[f64],
) -> Vec<Array1<Complex64>> {
    let c = e.inverse.dot(steady);
    times
        .par_iter()
        .map(|&t| {
            let w: Array1<Complex64> = c
                .iter()
                .zip(&e.values)
                .map(|(c, l)| c * (Complex64::new(0.0, -t) * (l - omega)).exp())
                .collect();
            steady - &e.vectors.dot(&w)
        })
        .collect()
}

/// Adaptive Dormand-Prince 5(4) integration of
/// `dx/dt = -i((A - Omega) x + P)` from `x(0) = 0`.
pub fn integrate(
    a: &Array2<Complex64>,
    omega: f64,
    p: &Array1<Complex64>,
    times: &[f64],
    tol: f64,
) -> Result<Vec<Array1<Complex64>>> {
    check_times(times)?;
    let mi = Complex64::new(0.0, -1.0);
    let f = |x: &Array1<Complex64>| -> Array1<Complex64> {
        let mut y = a.dot(x);
        y.zip_mut_with(x, |yi, xi| *yi -= xi * omega);
        y += p;
        y.mapv_inplace(|z| z * mi);
        y
    };
    const A: [&[f64]; 6] = [
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
        ],
        &[
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
        ],
        &[
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // Fifth-order minus embedded fourth-order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = p.len();
    let mut x = Array1::<Complex64>::zeros(n);
    let mut t = 0.0;
    let mut dt = 1e-2;
    let mut k1 = f(&x);
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            let clipped = target - t < dt;
            let step = dt.min(target - t);
            let mut k: Vec<Array1<Complex64>> = Vec::with_capacity(7);
            k.push(k1.clone());
            for row in A.iter() {
                let mut y = x.clone();
                for (j, &aij) in row.iter().enumerate() {
                    if aij != 0.0 {
                        y.scaled_add(Complex64::new(step * aij, 0.0), &k[j]);
                    }
                }
                k.push(f(&y));
            }
            // Row 6 of A holds the fifth-order weights, so stage 7 is f(x_new).
            let mut x_new = x.clone();
            for (j, &b) in A[5].iter().enumerate() {
                if b != 0.0 {
                    x_new.scaled_add(Complex64::new(step * b, 0.0), &k[j]);
                }
            }
            let mut err = Array1::<Complex64>::zeros(n);
            for (j, &e) in E.iter().enumerate() {
                if e != 0.0 {
                    err.scaled_add(Complex64::new(step * e, 0.0), &k[j]);
                }
            }
            let scale = tol * (1.0 + linalg::norm(&x_new));
            let ratio = linalg::norm(&err) / scale;
            if ratio <= 1.0 {
                t += step;
                x = x_new;
                k1 = k.pop().expect("seven stages");
            }
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            let proposed = (step * factor).max(1e-12);
            dt = if clipped && ratio <= 1.0 {
                dt.max(proposed)
            } else {
                proposed
            };
            if !dt.is_finite() {
                return Err(Error::Linalg("integrator step size collapsed".into()));
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Panel times `2 pi (t1 + j dt)` for `j = 0..panels`, in units of `1/T`.
pub fn panel_times(t1: f64, dt: f64, panels: usize) -> Vec<f64> {
    (0..panels)
        .map(|j| 2.0 * PI * (t1 + j as f64 * dt))
        .collect()
}

/// `0, step, 2 step, ...` up to the last panel, merged with the panels.
pub fn observation_grid(panels: &[f64], step: f64) -> Vec<f64> {
    let end = panels.iter().cloned().fold(0.0, f64::max);
    let n = (end / step).floor() as usize;
    let mut v: Vec<f64> = (0..=n)
        .map(|i| i as f64 * step)
        .chain(panels.iter().cloned())
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * step);
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Outer,
    Inner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Ccw,
    Cw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralMetric {
    pub times: Vec<f64>,
    /// Unwrapped centroid angle relative to the pump site, radians.
    pub angles: Vec<f64>,
    pub direction: Direction,
    /// Angle over time at the first sample reaching half the peak excursion.
    pub angular_velocity: f64,
}

fn centre(h: &Hamiltonian) -> (f64, f64) {
    h.spec
        .hole()
        .map(|hole| hole.centre())
        .unwrap_or((0.5 * (h.spec.nx + 1) as f64, 0.5 * (h.spec.ny + 1) as f64))
}

fn site_angle(h: &Hamiltonian, id: usize) -> f64 {
    let (cx, cy) = centre(h);
    let (x, y) = h.index.coord(id);
    (y as f64 - cy).atan2(x as f64 - cx)
}

fn edge_sites(h: &Hamiltonian, edge: Edge, depth: &RegionDepth) -> Vec<usize> {
    let want = match edge {
        Edge::Outer => Region::Outer,
        Edge::Inner => Region::Inner,
    };
    depth
        .regions(&h.spec, &h.index)
        .into_iter()
        .enumerate()
        .filter(|(_, r)| *r == want)
        .map(|(i, _)| i)
        .collect()
}

/// Photon-number centroid angle around the hole along one edge, unwrapped
/// across samples. The vacuum sample at `t = 0` anchors the angle at the
/// pump site.
pub fn chiral_metric(
    traj: &Trajectory,
    h: &Hamiltonian,
    edge: Edge,
    depth: &RegionDepth,
) -> Result<ChiralMetric> {
    let sites = edge_sites(h, edge, depth);
    let pump = traj
        .pump
        .entries
        .first()
        .ok_or_else(|| Error::InvalidArgument("trajectory has no pump".into()))?;
    let origin = site_angle(h, h.index.require(pump.0)?);
    let phases: Vec<Complex64> = sites
        .iter()
        .map(|&i| Complex64::from_polar(1.0, site_angle(h, i) - origin))
        .collect();
    let mut angles = Vec::with_capacity(traj.times.len());
    let mut prev: Option<f64> = None;
    let mut acc = 0.0;
    for (t, x) in traj.times.iter().zip(&traj.snapshots) {
        if *t == 0.0 {
            prev = Some(0.0);
            angles.push(0.0);
            continue;
        }
        let mut z = Complex64::new(0.0, 0.0);
        let mut total = 0.0;
        for (&i, ph) in sites.iter().zip(&phases) {
            let n = x[i].norm_sqr();
            z += ph * n;
            total += n;
        }
        if total < 1e-12 {
            return Err(Error::CentroidUndefined(format!(
                "edge photon number {total:.3e} at t = {t}"
            )));
        }
        let th = z.arg();
        acc = match prev {
            None => th,
            Some(p) => acc + (th - p + PI).rem_euclid(2.0 * PI) - PI,
        };
        prev = Some(th);
        angles.push(acc);
    }
    let last = *angles.last().expect("non-empty times");
    let direction = if last >= 0.0 {
        Direction::Ccw
    } else {
        Direction::Cw
    };
    let peak = angles.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let angular_velocity = traj
        .times
        .iter()
        .zip(&angles)
        .find(|(t, a)| **t > 0.0 && a.abs() >= 0.5 * peak)
        .map_or(0.0, |(t, a)| a / t);
    Ok(ChiralMetric {
        times: traj.times.clone(),
        angles,
        direction,
        angular_velocity,
    })
}

#[derive(Clone, Debug)]
pub struct DefectRun {
    pub trajectory: Trajectory,
    /// Photon number on the defect sites over the edge total, per sample.
    pub defect_fraction: Vec<f64>,
}

impl DefectRun {
    pub fn max_fraction(&self) -> f64 {
        self.defect_fraction.iter().cloned().fold(0.0, f64::max)
    }
}

/// [`evolve`] on a lattice carrying defects, tracking how much light the
/// defect sites hold relative to the whole pumped edge.
pub fn defect_run(
    h: &Hamiltonian,
    pump: &PumpSpec,
    decay: &DecaySpec,
    times: &[f64],
    edge: Edge,
    depth: &RegionDepth,
) -> Result<DefectRun> {
    let trajectory = evolve(h, pump, decay, times, Propagation::Auto)?;
    let defects: Vec<usize> = h
        .disorder
        .as_ref()
        .map(|d| {
            d.defects
                .iter()
                .map(|&(c, _)| h.index.require(c))
                .collect::<Result<_>>()
        })
        .transpose()?
        .unwrap_or_default();
    let edge = edge_sites(h, edge, depth);
    let defect_fraction = trajectory
        .snapshots
        .iter()
        .map(|x| {
            let total: f64 = edge.iter().map(|&i| x[i].norm_sqr()).sum();
            let held = defects.iter().fold(0.0, |acc, &i| acc + x[i].norm_sqr());
            if total > 0.0 {
                held / total
            } else {
                0.0
            }
        })
        .collect();
    Ok(DefectRun {
        trajectory,
        defect_fraction,
    })
}

/// `d|x|^2/dt` predicted by the equation of motion: `-sum kappa |x|^2 - 2 Im(P^H x)`.
pub fn norm_rate(x: &Array1<Complex64>, p: &Array1<Complex64>, kappa: &[f64]) -> f64 {
    let lost: f64 = x.iter().zip(kappa).map(|(z, k)| k * z.norm_sqr()).sum();
    let drive = p
        .iter()
        .zip(x)
        .fold(Complex64::new(0.0, 0.0), |s, (p, x)| s + p.conj() * x)
        .im;
    -lost - 2.0 * drive
}
