//! Run configuration, its JSON form, and up-front validation.

use std::f64::consts::TAU;

use ringlattice::drive::{check_consecutive, linspace_step, DecayParams, Solver};
use ringlattice::dynamics::Edge;
use ringlattice::lattice::{Coord, DisorderSpec, LatticeSpec};
use ringlattice::spectrum::{FluxGrid, CLOSED_GAP};
use ringlattice::topology::WindingParams;
use serde::{Deserialize, Serialize};

/// Hopping frequency `T / 2pi` in MHz used for physical-unit output.
pub const DEFAULT_T_MHZ: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub lattice: LatticeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderSpec>,
    #[serde(default)]
    pub decay: DecayParams,
    /// Overrides the disorder seed of every experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<UnitsBlock>,
    pub experiments: Vec<Experiment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsBlock {
    #[serde(default = "default_t_mhz")]
    pub t_mhz: f64,
    #[serde(default)]
    pub output: UnitChoice,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum UnitChoice {
    #[default]
    T,
    #[serde(rename = "MHz")]
    #[value(name = "MHz")]
    Mhz,
}

fn default_t_mhz() -> f64 {
    DEFAULT_T_MHZ
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    /// Output file stem.
    pub name: String,
    /// Replaces the run-level lattice for this experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    /// Replaces the run-level disorder for this experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderSpec>,
    #[serde(flatten)]
    pub kind: Kind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    Butterfly {
        grid: FluxGrid,
    },
    Spectrum {
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default = "default_closed")]
        closed_gap: f64,
    },
    Spectro {
        scans: Vec<SitePump>,
        omega: Axis,
        #[serde(default)]
        solver: Solver,
        /// Full-lattice steady states to export.
        #[serde(default)]
        fields: Vec<FieldPump>,
    },
    Momentum {
        runs: Vec<Vec<Coord>>,
        strength: f64,
        omega: f64,
        k_points: usize,
    },
    Alpha {
        sites: Vec<Coord>,
        strength: f64,
        alpha_frames: usize,
        k_points: usize,
        omega: Axis,
        /// Gap whose winding is extracted.
        gap: u32,
        #[serde(default)]
        winding: WindingParams,
    },
    Dynamics {
        site: Coord,
        strength: f64,
        omega: f64,
        /// First panel time and spacing, in units of `2pi / T`.
        t1: f64,
        dt: f64,
        panels: usize,
        /// Sampling step of the centroid trace, in units of `1 / T`.
        step: f64,
        edge: Edge,
        /// Detuning of the 2 x 2 hindrance, in units of T.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hindrance: Option<f64>,
        /// Disorder realizations with consecutive seeds; 0 runs the clean lattice.
        #[serde(default)]
        realizations: u32,
    },
    Chern {
        q_max: u32,
        grid: usize,
    },
}

fn default_threshold() -> f64 {
    0.5
}

fn default_closed() -> f64 {
    CLOSED_GAP
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SitePump {
    pub site: Coord,
    pub strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPump {
    pub site: Coord,
    pub strength: f64,
    pub omega: f64,
}

/// A detuning axis, explicit or derived from a bulk gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Range {
        start: f64,
        stop: f64,
        step: f64,
    },
    /// Gap `h` of the experiment lattice shrunk by `inset` of its width per side.
    Gap {
        h: u32,
        inset: f64,
        step: f64,
    },
}

impl Axis {
    pub fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite())
            || step <= 0.0
            || stop < start
        {
            return Vec::new();
        }
        linspace_step(start, stop, step)
    }
}

/// Either a bare config or a manifest that embeds one.
#[derive(Deserialize)]
#[serde(untagged)]
enum Document {
    Manifest { config: RunConfig },
    Config(RunConfig),
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    match serde_json::from_str::<Document>(text) {
        Ok(Document::Manifest { config }) | Ok(Document::Config(config)) => Ok(config),
        Err(_) => serde_json::from_str::<RunConfig>(text)
            .map_err(|e| format!("config does not parse: {e}")),
    }
}

impl RunConfig {
    pub fn lattice_for(&self, e: &Experiment) -> LatticeSpec {
        e.lattice.clone().unwrap_or_else(|| self.lattice.clone())
    }

    /// Disorder for one experiment with the run seed applied, if any
    /// disorder is configured.
    pub fn disorder_for(&self, e: &Experiment) -> Option<DisorderSpec> {
        e.disorder
            .clone()
            .or_else(|| self.disorder.clone())
            .map(|mut d| {
                if let Some(s) = self.seed {
                    d.seed = s;
                }
                d
            })
    }

    pub fn output_units(&self) -> crate::output::Units {
        match self.units {
            Some(UnitsBlock {
                t_mhz,
                output: UnitChoice::Mhz,
            }) => crate::output::Units::Mhz(t_mhz),
            _ => crate::output::Units::T,
        }
    }

    /// Every problem with the config, not just the first.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.experiments.is_empty() {
            out.push("no experiments configured".into());
        }
        if let Some(u) = self.units {
            if !(u.t_mhz.is_finite() && u.t_mhz > 0.0) {
                out.push(format!("units.t_mhz must be positive, got {}", u.t_mhz));
            }
        }
        out.extend(self.decay.diagnostics());
        let mut names = std::collections::BTreeSet::new();
        for e in &self.experiments {
            let tag = |m: String| format!("{}: {m}", e.name);
            if e.name.is_empty()
                || !e
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                out.push(format!(
                    "experiment name {:?} must be non-empty [A-Za-z0-9_-]",
                    e.name
                ));
            }
            if !names.insert(e.name.clone()) {
                out.push(format!("duplicate experiment name {:?}", e.name));
            }
            let spec = self.lattice_for(e);
            out.extend(spec.diagnostics().into_iter().map(tag));
            if let Some(d) = self.disorder_for(e) {
                out.extend(d.diagnostics(&spec).into_iter().map(tag));
            }
            out.extend(kind_diagnostics(&e.kind, &spec).into_iter().map(tag));
        }
        out
    }
}

fn site_check(out: &mut Vec<String>, spec: &LatticeSpec, what: &str, c: Coord) {
    if !spec.is_active(c) {
        out.push(format!(
            "{what} site ({}, {}) is not an active site",
            c.0, c.1
        ));
    }
}

fn positive(out: &mut Vec<String>, name: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        out.push(format!("{name} must be positive, got {v}"));
    }
}

fn axis_check(out: &mut Vec<String>, name: &str, axis: &Axis, spec: &LatticeSpec) {
    match *axis {
        Axis::Range { start, stop, step } => {
            if Axis::range(start, stop, step).is_empty() {
                out.push(format!(
                    "empty axis: {name} ({start} to {stop} step {step})"
                ));
            }
        }
        Axis::Gap { h, inset, step } => {
            positive(out, &format!("{name} step"), step);
            if !(0.0..0.5).contains(&inset) {
                out.push(format!(
                    "{name} gap inset must lie in [0, 0.5), got {inset}"
                ));
            }
            match spec.flux.rational() {
                Some((_, q)) if h >= 1 && h < q => {}
                _ => out.push(format!(
                    "{name} gap {h} needs a rational flux with 1 <= h < q"
                )),
            }
        }
    }
}

fn kind_diagnostics(kind: &Kind, spec: &LatticeSpec) -> Vec<String> {
    let mut out = Vec::new();
    match kind {
        Kind::Butterfly { grid } => match *grid {
            FluxGrid::Rational { q_max } if q_max == 0 => {
                out.push("empty axis: flux (q_max = 0)".into())
            }
            FluxGrid::Uniform { n } if n == 0 => out.push("empty axis: flux (n = 0)".into()),
            _ => {}
        },
        Kind::Spectrum {
            threshold,
            closed_gap,
        } => {
            if !(0.0..1.0).contains(threshold) {
                out.push(format!(
                    "classification threshold must lie in [0, 1), got {threshold}"
                ));
            }
            positive(&mut out, "closed_gap", *closed_gap);
            if spec.flux.rational().is_none() {
                out.push("gap table needs a rational flux".into());
            }
        }
        Kind::Spectro {
            scans,
            omega,
            fields,
            ..
        } => {
            if scans.is_empty() && fields.is_empty() {
                out.push("empty axis: scans".into());
            }
            for s in scans {
                site_check(&mut out, spec, "pump", s.site);
                positive(&mut out, "pump strength", s.strength);
            }
            for f in fields {
                site_check(&mut out, spec, "pump", f.site);
                positive(&mut out, "pump strength", f.strength);
            }
            axis_check(&mut out, "omega", omega, spec);
        }
        Kind::Momentum {
            runs,
            strength,
            omega,
            k_points,
        } => {
            if runs.is_empty() {
                out.push("empty axis: runs".into());
            }
            for r in runs {
                for &c in r {
                    site_check(&mut out, spec, "pump", c);
                }
                if let Err(e) = check_consecutive(r) {
                    out.push(e.to_string());
                }
            }
            positive(&mut out, "pump strength", *strength);
            if !omega.is_finite() {
                out.push("omega must be finite".into());
            }
            if *k_points < 3 {
                out.push(format!(
                    "empty axis: k_p needs at least 3 points, got {k_points}"
                ));
            }
        }
        Kind::Alpha {
            sites,
            strength,
            alpha_frames,
            k_points,
            omega,
            gap,
            ..
        } => {
            for &c in sites {
                site_check(&mut out, spec, "pump", c);
            }
            if let Err(e) = check_consecutive(sites) {
                out.push(e.to_string());
            }
            positive(&mut out, "pump strength", *strength);
            if *alpha_frames < 2 {
                out.push(format!(
                    "empty axis: alpha needs at least 2 frames, got {alpha_frames}"
                ));
            }
            if *k_points == 0 {
                out.push("empty axis: k_p".into());
            }
            axis_check(&mut out, "omega", omega, spec);
            match spec.flux.rational() {
                Some((_, q)) if *gap >= 1 && *gap < q => {}
                _ => out.push(format!(
                    "winding gap {gap} needs a rational flux with 1 <= h < q"
                )),
            }
        }
        Kind::Dynamics {
            site,
            strength,
            omega,
            t1,
            dt,
            panels,
            step,
            hindrance,
            ..
        } => {
            site_check(&mut out, spec, "pump", *site);
            positive(&mut out, "pump strength", *strength);
            positive(&mut out, "step", *step);
            if !omega.is_finite() {
                out.push("omega must be finite".into());
            }
            if *panels == 0 {
                out.push("empty axis: panels".into());
            }
            if !(t1.is_finite() && *t1 >= 0.0 && dt.is_finite() && *dt >= 0.0) {
                out.push(format!(
                    "panel times need t1 >= 0 and dt >= 0, got {t1} and {dt}"
                ));
            }
            if let Some(w) = hindrance {
                if !w.is_finite() {
                    out.push("hindrance detuning must be finite".into());
                }
                for c in DisorderSpec::hindrance(0.0).iter().map(|d| d.0) {
                    site_check(&mut out, spec, "hindrance", c);
                }
            }
        }
        Kind::Chern { q_max, grid } => {
            if *q_max < 1 {
                out.push("empty axis: q_max".into());
            }
            if *grid < 6 {
                out.push(format!(
                    "Brillouin-zone grid needs at least 6 points, got {grid}"
                ));
            }
        }
    }
    out
}

/// `alpha_frames` points over `[0, 2pi]` inclusive.
pub fn alpha_grid(frames: usize) -> Vec<f64> {
    (0..frames)
        .map(|i| {
            if i + 1 == frames {
                TAU
            } else {
                TAU * i as f64 / (frames - 1) as f64
            }
        })
        .collect()
}
