//! Executes each configured experiment and writes its artifacts.

use std::path::Path;

use ringlattice::drive::{alpha_scan, k_grid, momentum_scan, spectro_scan, steady_state, PumpSpec};
use ringlattice::dynamics::{chiral_metric, defect_run, observation_grid, panel_times};
use ringlattice::lattice::{DisorderSpec, Hamiltonian, Region, RegionDepth};
use ringlattice::peaks::Peak;
use ringlattice::spectrum::{
    diagonalize, find_gaps, ButterflyRow, ClassifyParams, GapTable, CLOSED_GAP,
};
use ringlattice::topology::{
    all_windings, chern_fhs_bands, chern_from_windings, extract_winding, touching_bands,
    WindingRecord,
};
use ringlattice::{Coord, Error};
use serde::Serialize;

use crate::config::{alpha_grid, Axis, Experiment, Kind, RunConfig};
use crate::output::{Cell, Sink, Units};

#[derive(Debug)]
pub enum RunError {
    Module(Error),
    Io(std::io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Module(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Module(e) => e.kind(),
            RunError::Io(_) => "io",
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Module(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

/// One winding or Chern result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopoRecord {
    pub p: u32,
    pub q: u32,
    pub h: u32,
    pub s: Option<i64>,
    pub t: Option<i64>,
    #[serde(rename = "C")]
    pub c: Option<i64>,
    pub method: &'static str,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Serialize)]
struct PeakRecord {
    location: f64,
    height: f64,
    fwhm: Option<f64>,
    gap: Option<u32>,
}

#[derive(Serialize)]
struct ScanPeaks {
    site: Coord,
    strength: f64,
    peaks: Vec<PeakRecord>,
}

#[derive(Serialize)]
struct FieldSummary {
    site: Coord,
    strength: f64,
    omega: f64,
    total: f64,
    outer: f64,
    inner: f64,
    bulk: f64,
}

#[derive(Serialize)]
struct MomentumPeak {
    m: usize,
    sites: Vec<Coord>,
    k_peak: Option<f64>,
    height: Option<f64>,
    fwhm: Option<f64>,
}

#[derive(Serialize)]
struct WindingOut {
    #[serde(flatten)]
    record: TopoRecord,
    reference: f64,
    per_k: Vec<i64>,
    ambiguous: Vec<usize>,
    diophantine: TopoRecord,
    periodicity_error: f64,
}

#[derive(Serialize)]
struct ChiralOut {
    seed: Option<u64>,
    direction: ringlattice::dynamics::Direction,
    final_angle: f64,
    angular_velocity: f64,
    max_defect_fraction: f64,
    propagation: ringlattice::dynamics::Propagation,
}

pub fn execute(config: &RunConfig, out: &Path, units: Units) -> Result<Vec<String>, RunError> {
    let mut sink = Sink::new(out)?;
    for e in &config.experiments {
        run_one(config, e, &mut sink, units)?;
    }
    Ok(sink.files)
}

fn gap_table(h: &Hamiltonian, closed: f64) -> Result<GapTable, Error> {
    let (p, q) = h
        .spec
        .flux
        .rational()
        .ok_or_else(|| Error::InvalidArgument("gap table needs a rational flux".into()))?;
    find_gaps(&diagonalize(h, &ClassifyParams::default())?, p, q, closed)
}

fn resolve_axis(axis: &Axis, h: &Hamiltonian) -> Result<Vec<f64>, Error> {
    match *axis {
        Axis::Range { start, stop, step } => Ok(Axis::range(start, stop, step)),
        Axis::Gap {
            h: gap,
            inset,
            step,
        } => {
            let table = gap_table(h, CLOSED_GAP)?;
            let g = table
                .gap(gap)
                .ok_or_else(|| Error::InvalidArgument(format!("no gap {gap}")))?;
            if g.closed {
                return Err(Error::InvalidArgument(format!("gap {gap} is closed")));
            }
            let (lo, hi) = g.interior(inset);
            Ok(Axis::range(lo, hi, step))
        }
    }
}

fn diophantine_records(p: u32, q: u32) -> Result<Vec<TopoRecord>, Error> {
    if q < 2 {
        return Ok(Vec::new());
    }
    let w = all_windings(p, q)?;
    w.iter()
        .map(|r| {
            let c = chern_from_windings(&w, &[r.h]).ok().map(|c| c[0].chern);
            Ok(topo(r, c, "diophantine"))
        })
        .collect()
}

fn topo(r: &WindingRecord, c: Option<i64>, method: &'static str) -> TopoRecord {
    TopoRecord {
        p: r.p,
        q: r.q,
        h: r.h,
        s: Some(r.s),
        t: Some(r.t),
        c,
        method,
        degenerate: r.degenerate,
    }
}

fn run_one(
    config: &RunConfig,
    e: &Experiment,
    sink: &mut Sink,
    units: Units,
) -> Result<(), RunError> {
    let spec = config.lattice_for(e);
    let disorder = config.disorder_for(e);
    let name = e.name.as_str();
    match &e.kind {
        Kind::Butterfly { grid } => {
            let rows = ringlattice::spectrum::butterfly(&spec, *grid)?;
            sink.csv(
                &format!("{name}.csv"),
                &["phi", "index", "energy"],
                rows.iter().map(|r: &ButterflyRow| {
                    vec![r.phi.into(), r.index.into(), units.energy(r.energy).into()]
                }),
            )?;
        }
        Kind::Spectrum {
            threshold,
            closed_gap,
        } => {
            let h = Hamiltonian::build(&spec, disorder.as_ref())?;
            let params = ClassifyParams {
                depth: RegionDepth::default(),
                threshold: *threshold,
            };
            let modes = diagonalize(&h, &params)?;
            let class = |i: usize| match modes.classes[i] {
                ringlattice::spectrum::ModeClass::OuterEdge => "OESM",
                ringlattice::spectrum::ModeClass::InnerEdge => "IESM",
                ringlattice::spectrum::ModeClass::Bulk => "BSM",
            };
            sink.csv(
                &format!("{name}.csv"),
                &["index", "energy", "class", "w_outer", "w_inner", "w_bulk"],
                (0..modes.len()).map(|i| {
                    let w = modes.weights[i];
                    vec![
                        i.into(),
                        units.energy(modes.eigenvalues[i]).into(),
                        class(i).into(),
                        w[0].into(),
                        w[1].into(),
                        w[2].into(),
                    ]
                }),
            )?;
            if let Some((p, q)) = spec.flux.rational() {
                let table = find_gaps(&modes, p, q, *closed_gap)?;
                sink.json(&format!("{name}_gaps.json"), &table)?;
                sink.json(&format!("{name}_winding.json"), &diophantine_records(p, q)?)?;
            }
        }
        Kind::Spectro {
            scans,
            omega,
            solver,
            fields,
        } => {
            let h = Hamiltonian::build(&spec, disorder.as_ref())?;
            let table = spec
                .flux
                .rational()
                .map(|_| gap_table(&h, CLOSED_GAP))
                .transpose()?;
            let in_gap = |x: f64| {
                table.as_ref().and_then(|t| {
                    t.gaps
                        .iter()
                        .find(|g| !g.closed && g.contains(x))
                        .map(|g| g.h)
                })
            };
            let grid = if scans.is_empty() {
                Vec::new()
            } else {
                resolve_axis(omega, &h)?
            };
            let mut all = Vec::new();
            for s in scans {
                let decay = config.decay.build(&h.index, &[s.site])?;
                let scan = spectro_scan(&h, s.site, s.strength, &grid, &decay, *solver)?;
                sink.csv(
                    &format!("{name}_{}_{}.csv", s.site.0, s.site.1),
                    &["omega", "n_sp"],
                    scan.omega
                        .iter()
                        .zip(&scan.n_sp)
                        .map(|(w, n)| vec![units.energy(*w).into(), (*n).into()]),
                )?;
                let peaks = scan
                    .peaks
                    .iter()
                    .map(|p: &Peak| PeakRecord {
                        location: units.energy(p.location),
                        height: p.height,
                        fwhm: p.fwhm.map(|w| units.energy(w)),
                        gap: in_gap(p.location),
                    })
                    .collect();
                all.push(ScanPeaks {
                    site: s.site,
                    strength: s.strength,
                    peaks,
                });
            }
            if !scans.is_empty() {
                sink.json(&format!("{name}_peaks.json"), &all)?;
            }
            let regions = RegionDepth::default().regions(&h.spec, &h.index);
            let mut summaries = Vec::new();
            for (i, f) in fields.iter().enumerate() {
                let decay = config.decay.build(&h.index, &[f.site])?;
                let st = steady_state(&h, &PumpSpec::single(f.site, f.strength, f.omega), &decay)?;
                sink.csv(
                    &format!("{name}_field_{i}.csv"),
                    &["x", "y", "photon_number"],
                    h.index
                        .coords()
                        .iter()
                        .zip(&st.photon_numbers)
                        .map(|(c, n)| vec![c.0.into(), c.1.into(), (*n).into()]),
                )?;
                let total = st.total();
                let share = |r: Region| {
                    st.photon_numbers
                        .iter()
                        .zip(&regions)
                        .filter(|(_, x)| **x == r)
                        .map(|(n, _)| n)
                        .sum::<f64>()
                        / total
                };
                summaries.push(FieldSummary {
                    site: f.site,
                    strength: f.strength,
                    omega: units.energy(f.omega),
                    total,
                    outer: share(Region::Outer),
                    inner: share(Region::Inner),
                    bulk: share(Region::Bulk),
                });
            }
            if !fields.is_empty() {
                sink.json(&format!("{name}_fields.json"), &summaries)?;
            }
        }
        Kind::Momentum {
            runs,
            strength,
            omega,
            k_points,
        } => {
            let h = Hamiltonian::build(&spec, disorder.as_ref())?;
            let ks = k_grid(*k_points);
            let mut rows = Vec::new();
            let mut peaks = Vec::new();
            for sites in runs {
                let decay = config.decay.build(&h.index, sites)?;
                let scan = momentum_scan(&h, sites, *strength, *omega, &ks, &decay)?;
                for (k, n) in scan.k_p.iter().zip(&scan.n_mp) {
                    rows.push(vec![Cell::F(*k), scan.m().into(), Cell::F(*n)]);
                }
                peaks.push(MomentumPeak {
                    m: scan.m(),
                    sites: sites.clone(),
                    k_peak: scan.peak.map(|p| p.location),
                    height: scan.peak.map(|p| p.height),
                    fwhm: scan.peak.and_then(|p| p.fwhm),
                });
            }
            sink.csv(&format!("{name}.csv"), &["k_p", "m", "n_mp"], rows)?;
            sink.json(&format!("{name}_peaks.json"), &peaks)?;
        }
        Kind::Alpha {
            sites,
            strength,
            alpha_frames,
            k_points,
            omega,
            gap,
            winding,
        } => {
            let h = Hamiltonian::build(&spec, disorder.as_ref())?;
            let grid = resolve_axis(omega, &h)?;
            let scan = alpha_scan(
                &spec,
                disorder.as_ref(),
                sites,
                *strength,
                &alpha_grid(*alpha_frames),
                &grid,
                &k_grid(*k_points),
                &config.decay,
            )?;
            let (nk, nw) = (scan.k_p.len(), scan.omega.len());
            sink.csv(
                &format!("{name}.csv"),
                &["alpha", "k_p", "omega", "n_mp"],
                scan.n_mp.iter().enumerate().map(|(i, n)| {
                    let (ia, ik, iw) = (i / (nk * nw), (i / nw) % nk, i % nw);
                    vec![
                        scan.alpha[ia].into(),
                        scan.k_p[ik].into(),
                        units.energy(scan.omega[iw]).into(),
                        (*n).into(),
                    ]
                }),
            )?;
            let (p, q) = spec.flux.rational().expect("validated rational flux");
            let x = extract_winding(&scan, winding)?;
            let num = *gap as i64 - x.t * p as i64;
            let record = TopoRecord {
                p,
                q,
                h: *gap,
                s: (num % q as i64 == 0).then(|| num / q as i64),
                t: Some(x.t),
                c: None,
                method: "flux_pumping",
                degenerate: false,
            };
            let dio = ringlattice::topology::diophantine_winding(p, q, *gap)?;
            sink.json(
                &format!("{name}_winding.json"),
                &WindingOut {
                    record,
                    reference: units.energy(x.reference),
                    per_k: x.per_k,
                    ambiguous: x.ambiguous,
                    diophantine: topo(&dio, None, "diophantine"),
                    periodicity_error: scan.periodicity_error(),
                },
            )?;
        }
        Kind::Dynamics {
            site,
            strength,
            omega,
            t1,
            dt,
            panels,
            step,
            edge,
            hindrance,
            realizations,
        } => {
            let panel = panel_times(*t1, *dt, *panels);
            let times = observation_grid(&panel, *step);
            let defects = hindrance.map(DisorderSpec::hindrance).unwrap_or_default();
            let base = disorder.clone().unwrap_or_default();
            let runs: Vec<(String, Option<DisorderSpec>)> = if *realizations == 0 {
                let d = (disorder.is_some() || !defects.is_empty()).then(|| DisorderSpec {
                    defects: defects.clone(),
                    ..base.clone()
                });
                vec![(name.to_string(), d)]
            } else {
                (0..*realizations)
                    .map(|i| {
                        let d = DisorderSpec {
                            seed: base.seed.wrapping_add(i as u64),
                            defects: defects.clone(),
                            ..base.clone()
                        };
                        (format!("{name}_r{i}"), Some(d))
                    })
                    .collect()
            };
            let mut summary = Vec::new();
            for (stem, d) in runs {
                let h = Hamiltonian::build(&spec, d.as_ref())?;
                let decay = config.decay.build(&h.index, &[*site])?;
                let pump = PumpSpec::single(*site, *strength, *omega);
                let run = defect_run(&h, &pump, &decay, &times, *edge, &RegionDepth::default())?;
                let metric = chiral_metric(&run.trajectory, &h, *edge, &RegionDepth::default())?;
                let tr = &run.trajectory;
                let mut rows = Vec::new();
                for &t in &panel {
                    let i = tr
                        .times
                        .iter()
                        .position(|&s| s == t)
                        .expect("panel time on grid");
                    for (c, z) in h.index.coords().iter().zip(&tr.snapshots[i]) {
                        rows.push(vec![
                            units.time(t).into(),
                            c.0.into(),
                            c.1.into(),
                            z.norm_sqr().into(),
                        ]);
                    }
                }
                sink.csv(
                    &format!("{stem}.csv"),
                    &["t", "x", "y", "photon_number"],
                    rows,
                )?;
                sink.csv(
                    &format!("{stem}_angle.csv"),
                    &["t", "angle", "defect_fraction"],
                    metric
                        .times
                        .iter()
                        .zip(&metric.angles)
                        .zip(&run.defect_fraction)
                        .map(|((t, a), f)| vec![units.time(*t).into(), (*a).into(), (*f).into()]),
                )?;
                summary.push(ChiralOut {
                    seed: d.as_ref().map(|d| d.seed),
                    direction: metric.direction,
                    final_angle: *metric.angles.last().expect("non-empty"),
                    angular_velocity: metric.angular_velocity,
                    max_defect_fraction: run.max_fraction(),
                    propagation: tr.method,
                });
            }
            sink.json(&format!("{name}_chiral.json"), &summary)?;
        }
        Kind::Chern { q_max, grid } => {
            let mut records = Vec::new();
            for flux in (ringlattice::spectrum::FluxGrid::Rational { q_max: *q_max }).fluxes() {
                let (p, q) = flux.rational().expect("rational grid");
                if p == 0 {
                    continue;
                }
                records.extend(diophantine_records(p, q)?);
                let touching = touching_bands(p, q, *grid)?;
                let bands: Vec<u32> = (1..=q).filter(|b| !touching.contains(b)).collect();
                let fhs = chern_fhs_bands(p, q, *grid, &bands)?;
                for b in 1..=q {
                    let c = fhs.iter().find(|c| c.band == b).map(|c| c.chern);
                    records.push(TopoRecord {
                        p,
                        q,
                        h: b,
                        s: None,
                        t: None,
                        c,
                        method: "fhs",
                        degenerate: false,
                    });
                }
            }
            sink.json(&format!("{name}.json"), &records)?;
        }
    }
    Ok(())
}
