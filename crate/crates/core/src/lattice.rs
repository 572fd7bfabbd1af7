//! Annular square lattice, Peierls phases and the coupling matrix.
//!
//! Coordinates are 1-based `(x, y)`. Active sites get dense ids in row-major
//! order on `(y, x)`. The vertical link `(x, y) -> (x, y + 1)` carries the
//! Landau phase `x * phi`; horizontal links carry none. The vacancy flux is a
//! string of extra phase on the vertical links right of the hole along its
//! midline row, sized so that a loop hugging the hole picks up
//! `hole_x * hole_y * phi + alpha`.

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Coord = (u32, u32);

const TAU: f64 = 2.0 * PI;

/// Flux per plaquette.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flux {
    /// `phi / 2pi = p / q`.
    Rational { p: u32, q: u32 },
    /// `phi` in radians, `[0, 2pi)`.
    Angle(f64),
}

impl Flux {
    pub fn phi(&self) -> f64 {
        match *self {
            Flux::Rational { p, q } => TAU * p as f64 / q as f64,
            Flux::Angle(a) => a,
        }
    }

    pub fn rational(&self) -> Option<(u32, u32)> {
        match *self {
            Flux::Rational { p, q } => Some((p, q)),
            Flux::Angle(_) => None,
        }
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nx: u32,
    pub ny: u32,
    pub hole_x: u32,
    pub hole_y: u32,
    /// Shift of the hole away from the centre, in sites.
    #[serde(default)]
    pub hole_offset: (i32, i32),
    pub flux: Flux,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub hopping: f64,
}

/// Inclusive bounds of the vacancy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hole {
    pub x0: u32,
    pub x1: u32,
    pub y0: u32,
    pub y1: u32,
}

impl Hole {
    pub fn contains(&self, (x, y): Coord) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    /// Row whose upward links carry the vacancy flux string.
    pub fn cut_row(&self) -> u32 {
        self.y0 + (self.y1 - self.y0) / 2
    }

    /// Chebyshev distance from a site outside the hole to the hole.
    pub fn chebyshev(&self, (x, y): Coord) -> u32 {
        let dx = if x < self.x0 {
            self.x0 - x
        } else {
            x.saturating_sub(self.x1)
        };
        let dy = if y < self.y0 {
            self.y0 - y
        } else {
            y.saturating_sub(self.y1)
        };
        dx.max(dy)
    }

    pub fn centre(&self) -> (f64, f64) {
        (
            0.5 * (self.x0 + self.x1) as f64,
            0.5 * (self.y0 + self.y1) as f64,
        )
    }
}

impl LatticeSpec {
    /// 24 x 24 sites with a centred 6 x 6 vacancy, `phi / 2pi = p / q`.
    pub fn standard(p: u32, q: u32) -> Self {
        LatticeSpec {
            nx: 24,
            ny: 24,
            hole_x: 6,
            hole_y: 6,
            hole_offset: (0, 0),
            flux: Flux::Rational { p, q },
            alpha: 0.0,
            hopping: 1.0,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        LatticeSpec {
            alpha,
            ..self.clone()
        }
    }

    pub fn with_flux(&self, flux: Flux) -> Self {
        LatticeSpec {
            flux,
            ..self.clone()
        }
    }

    pub fn phi(&self) -> f64 {
        self.flux.phi()
    }

    pub fn hole(&self) -> Option<Hole> {
        if self.hole_x == 0 || self.hole_y == 0 {
            return None;
        }
        let x0 = (self.nx as i64 - self.hole_x as i64) / 2 + 1 + self.hole_offset.0 as i64;
        let y0 = (self.ny as i64 - self.hole_y as i64) / 2 + 1 + self.hole_offset.1 as i64;
        Some(Hole {
            x0: x0.max(0) as u32,
            x1: (x0 + self.hole_x as i64 - 1).max(0) as u32,
            y0: y0.max(0) as u32,
            y1: (y0 + self.hole_y as i64 - 1).max(0) as u32,
        })
    }

    pub fn contains(&self, (x, y): Coord) -> bool {
        (1..=self.nx).contains(&x) && (1..=self.ny).contains(&y)
    }

    pub fn is_active(&self, c: Coord) -> bool {
        self.contains(c) && !self.hole().is_some_and(|h| h.contains(c))
    }

    pub fn site_count(&self) -> usize {
        (self.nx * self.ny - self.hole_x.min(self.nx) * self.hole_y.min(self.ny)) as usize
    }

    /// Every invariant violation, not just the first.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.nx == 0 || self.ny == 0 {
            out.push(format!(
                "lattice dimensions must be positive, got {} x {}",
                self.nx, self.ny
            ));
        }
        match self.flux {
            Flux::Rational { p, q } => {
                if q == 0 {
                    out.push("flux denominator q must be positive".into());
                } else if gcd(p as u64, q as u64) != 1 {
                    out.push(format!("gcd rule: p = {p} and q = {q} must be coprime"));
                }
            }
            Flux::Angle(a) => {
                if !(a.is_finite() && (0.0..TAU).contains(&a)) {
                    out.push(format!("flux angle {a} outside [0, 2pi)"));
                }
            }
        }
        if !(self.alpha.is_finite() && (0.0..=TAU).contains(&self.alpha)) {
            out.push(format!(
                "vacancy flux alpha = {} outside [0, 2pi]",
                self.alpha
            ));
        }
        if !(self.hopping.is_finite() && self.hopping > 0.0) {
            out.push(format!("hopping must be positive, got {}", self.hopping));
        }
        if (self.hole_x == 0) != (self.hole_y == 0) {
            out.push(format!(
                "vacancy must have both dimensions zero or both positive, got {} x {}",
                self.hole_x, self.hole_y
            ));
        }
        if self.hole_x > 0 && self.hole_y > 0 {
            if self.hole_x >= self.nx || self.hole_y >= self.ny {
                out.push(format!(
                    "vacancy {} x {} does not fit inside {} x {}",
                    self.hole_x, self.hole_y, self.nx, self.ny
                ));
            } else {
                if self.hole_offset == (0, 0)
                    && ((self.nx - self.hole_x) % 2 != 0 || (self.ny - self.hole_y) % 2 != 0)
                {
                    out.push(format!(
                        "vacancy cannot be centred: Nx - nx = {} and Ny - ny = {} must be even",
                        self.nx - self.hole_x,
                        self.ny - self.hole_y
                    ));
                }
                let h = self.hole().expect("hole dims positive");
                let x0 = (self.nx as i64 - self.hole_x as i64) / 2 + 1 + self.hole_offset.0 as i64;
                let y0 = (self.ny as i64 - self.hole_y as i64) / 2 + 1 + self.hole_offset.1 as i64;
                if x0 < 2 || y0 < 2 || h.x1 >= self.nx || h.y1 >= self.ny {
                    out.push(
                        "vacancy must leave at least one ring of sites to the outer boundary"
                            .into(),
                    );
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(d.join("; ")))
        }
    }
}

/// Bijection between active coordinates and dense ids.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteIndex {
    nx: u32,
    ny: u32,
    coords: Vec<Coord>,
    ids: Vec<Option<usize>>,
}

impl SiteIndex {
    pub fn new(spec: &LatticeSpec) -> Self {
        let mut coords = Vec::with_capacity(spec.site_count());
        let mut ids = vec![None; (spec.nx * spec.ny) as usize];
        for y in 1..=spec.ny {
            for x in 1..=spec.nx {
                if spec.is_active((x, y)) {
                    ids[((y - 1) * spec.nx + (x - 1)) as usize] = Some(coords.len());
                    coords.push((x, y));
                }
            }
        }
        SiteIndex {
            nx: spec.nx,
            ny: spec.ny,
            coords,
            ids,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn id(&self, (x, y): Coord) -> Option<usize> {
        if x == 0 || y == 0 || x > self.nx || y > self.ny {
            return None;
        }
        self.ids[((y - 1) * self.nx + (x - 1)) as usize]
    }

    pub fn require(&self, c: Coord) -> Result<usize> {
        self.id(c).ok_or(Error::InactiveSite(c.0, c.1))
    }

    pub fn coord(&self, id: usize) -> Coord {
        self.coords[id]
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkKind {
    Horizontal,
    Vertical,
}

/// Nearest-neighbour link in canonical direction (`+x` or `+y`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub kind: LinkKind,
    /// `theta_{to, from}` in `(-pi, pi]`.
    pub phase: f64,
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_phase(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Clone, Debug)]
pub struct GaugeField {
    pub spec: LatticeSpec,
    pub index: SiteIndex,
    pub links: Vec<Link>,
    lookup: HashMap<(usize, usize), usize>,
}

impl GaugeField {
    /// Directed phase `theta_{to, from}`; `None` if the sites are not linked.
    pub fn phase(&self, from: usize, to: usize) -> Option<f64> {
        if let Some(&k) = self.lookup.get(&(from, to)) {
            Some(self.links[k].phase)
        } else {
            self.lookup.get(&(to, from)).map(|&k| -self.links[k].phase)
        }
    }

    /// Phase accumulated along a closed path of neighbouring active sites.
    pub fn wilson_loop(&self, path: &[Coord]) -> Result<f64> {
        if path.len() < 2 {
            return Err(Error::InvalidArgument(
                "loop needs at least two sites".into(),
            ));
        }
        let mut total = 0.0;
        for k in 0..path.len() {
            let a = self.index.require(path[k])?;
            let b = self.index.require(path[(k + 1) % path.len()])?;
            total += self.phase(a, b).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{:?} and {:?} are not linked",
                    path[k],
                    path[(k + 1) % path.len()]
                ))
            })?;
        }
        Ok(total)
    }

    /// Counterclockwise phase sum of the plaquette with lower-left corner `c`,
    /// or `None` if any corner is inactive.
    pub fn plaquette(&self, (x, y): Coord) -> Option<f64> {
        let path = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
        if path.iter().all(|&c| self.index.id(c).is_some()) {
            self.wilson_loop(&path).ok()
        } else {
            None
        }
    }
}

/// Closed counterclockwise loop through the ring of sites at Chebyshev
/// distance `ring` (>= 1) from the hole.
pub fn ring_loop(spec: &LatticeSpec, ring: u32) -> Option<Vec<Coord>> {
    let h = spec.hole()?;
    if ring == 0 || h.x0 <= ring || h.y0 <= ring {
        return None;
    }
    let (xa, xb, ya, yb) = (h.x0 - ring, h.x1 + ring, h.y0 - ring, h.y1 + ring);
    if xb > spec.nx || yb > spec.ny {
        return None;
    }
    let mut path = Vec::new();
    for x in xa..xb {
        path.push((x, ya));
    }
    for y in ya..yb {
        path.push((xb, y));
    }
    for x in (xa + 1..=xb).rev() {
        path.push((x, yb));
    }
    for y in (ya + 1..=yb).rev() {
        path.push((xa, y));
    }
    Some(path)
}

pub fn build_gauge(spec: &LatticeSpec) -> Result<GaugeField> {
    spec.validate()?;
    let index = SiteIndex::new(spec);
    let phi = spec.phi();
    let hole = spec.hole();
    let string_phase = hole.map(|h| spec.alpha - (h.x1 - h.x0 + h.y1 - h.y0 + 3) as f64 * phi);
    let mut links = Vec::new();
    for y in 1..=spec.ny {
        for x in 1..=spec.nx {
            let Some(from) = index.id((x, y)) else {
                continue;
            };
            if let Some(to) = index.id((x + 1, y)) {
                links.push(Link {
                    from,
                    to,
                    kind: LinkKind::Horizontal,
                    phase: 0.0,
                });
            }
        }
    }
    for y in 1..=spec.ny {
        for x in 1..=spec.nx {
            let Some(from) = index.id((x, y)) else {
                continue;
            };
            if let Some(to) = index.id((x, y + 1)) {
                let mut theta = x as f64 * phi;
                if let (Some(h), Some(s)) = (hole, string_phase) {
                    if y == h.cut_row() && x > h.x1 {
                        theta += s;
                    }
                }
                links.push(Link {
                    from,
                    to,
                    kind: LinkKind::Vertical,
                    phase: wrap_phase(theta),
                });
            }
        }
    }
    let lookup = links
        .iter()
        .enumerate()
        .map(|(k, l)| ((l.from, l.to), k))
        .collect();
    Ok(GaugeField {
        spec: spec.clone(),
        index,
        links,
        lookup,
    })
}

/// Quasi-static disorder plus hard on-site overrides. Widths in units of T.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    #[serde(default)]
    pub sigma_diag: f64,
    #[serde(default)]
    pub sigma_offdiag: f64,
    #[serde(default)]
    pub seed: u64,
    /// `(site, delta_omega / T)`; replaces the drawn on-site value.
    #[serde(default)]
    pub defects: Vec<(Coord, f64)>,
}

impl DisorderSpec {
    pub fn clean() -> Self {
        Self::default()
    }

    /// The 2 x 2 hindrance on the upper outer edge, sites (12-13, 23-24).
    pub fn hindrance(delta_omega: f64) -> Vec<(Coord, f64)> {
        vec![
            ((12, 23), delta_omega),
            ((13, 23), delta_omega),
            ((12, 24), delta_omega),
            ((13, 24), delta_omega),
        ]
    }

    pub fn diagnostics(&self, spec: &LatticeSpec) -> Vec<String> {
        let mut out = Vec::new();
        for (name, s) in [
            ("sigma_diag", self.sigma_diag),
            ("sigma_offdiag", self.sigma_offdiag),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                out.push(format!("{name} must be non-negative, got {s}"));
            }
        }
        for &(c, w) in &self.defects {
            if !spec.is_active(c) {
                out.push(format!(
                    "defect site ({}, {}) is not an active site",
                    c.0, c.1
                ));
            }
            if !w.is_finite() {
                out.push(format!(
                    "defect detuning at ({}, {}) is not finite",
                    c.0, c.1
                ));
            }
        }
        out
    }

    /// On-site draws in dense-id order (RNG stream 0).
    pub fn onsite(&self, n: usize, hopping: f64) -> Vec<f64> {
        draw(self.seed, 0, self.sigma_diag * hopping, n)
    }

    /// Hopping draws in canonical link order (RNG stream 1).
    pub fn links(&self, n: usize, hopping: f64) -> Vec<f64> {
        draw(self.seed, 1, self.sigma_offdiag * hopping, n)
    }
}

fn draw(seed: u64, stream: u64, sigma: f64, n: usize) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).expect("finite non-negative sigma");
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Coupling matrix `B` over active sites, in the same energy unit as `hopping`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub matrix: Array2<Complex64>,
    pub index: SiteIndex,
    pub spec: LatticeSpec,
    pub disorder: Option<DisorderSpec>,
}

impl Hamiltonian {
    pub fn build(spec: &LatticeSpec, disorder: Option<&DisorderSpec>) -> Result<Self> {
        build_hamiltonian(spec, &build_gauge(spec)?, disorder)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn build_hamiltonian(
    spec: &LatticeSpec,
    gauge: &GaugeField,
    disorder: Option<&DisorderSpec>,
) -> Result<Hamiltonian> {
    if gauge.spec != *spec || gauge.index.len() != spec.site_count() {
        return Err(Error::Dimension(format!(
            "gauge built for {} sites does not match spec with {} sites",
            gauge.index.len(),
            spec.site_count()
        )));
    }
    if let Some(d) = disorder {
        let diag = d.diagnostics(spec);
        if !diag.is_empty() {
            return Err(Error::InvalidSpec(diag.join("; ")));
        }
    }
    let n = gauge.index.len();
    let t = spec.hopping;
    let mut b = Array2::<Complex64>::zeros((n, n));
    let d_link = disorder.map_or_else(
        || vec![0.0; gauge.links.len()],
        |d| d.links(gauge.links.len(), t),
    );
    for (l, dt) in gauge.links.iter().zip(&d_link) {
        let v = Complex64::from_polar(t + dt, -l.phase);
        b[[l.to, l.from]] = v;
        b[[l.from, l.to]] = v.conj();
    }
    if let Some(d) = disorder {
        for (i, w) in d.onsite(n, t).into_iter().enumerate() {
            b[[i, i]] = Complex64::new(w, 0.0);
        }
        for &(c, w) in &d.defects {
            let i = gauge.index.require(c)?;
            b[[i, i]] = Complex64::new(w * t, 0.0);
        }
    }
    Ok(Hamiltonian {
        matrix: b,
        index: gauge.index.clone(),
        spec: spec.clone(),
        disorder: disorder.cloned(),
    })
}

/// Literal boundary sets: outermost ring, sites 4-adjacent to the hole, rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSets {
    pub outer: Vec<usize>,
    pub inner: Vec<usize>,
    pub bulk: Vec<usize>,
}

pub fn edge_sets(spec: &LatticeSpec) -> EdgeSets {
    let index = SiteIndex::new(spec);
    let hole = spec.hole();
    let mut sets = EdgeSets {
        outer: vec![],
        inner: vec![],
        bulk: vec![],
    };
    for (id, &(x, y)) in index.coords().iter().enumerate() {
        if x == 1 || y == 1 || x == spec.nx || y == spec.ny {
            sets.outer.push(id);
        } else if hole.is_some_and(|h| {
            [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                .iter()
                .any(|&c| h.contains(c))
        }) {
            sets.inner.push(id);
        } else {
            sets.bulk.push(id);
        }
    }
    sets
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Outer,
    Inner,
    Bulk,
}

/// Widened regions used for mode classification and edge weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDepth {
    /// Rings counted from the outer boundary.
    pub outer: u32,
    /// Rings counted from the hole.
    pub inner: u32,
}

impl Default for RegionDepth {
    fn default() -> Self {
        RegionDepth { outer: 2, inner: 2 }
    }
}

impl RegionDepth {
    pub fn region(&self, spec: &LatticeSpec, (x, y): Coord) -> Region {
        let d_out = (x - 1).min(spec.nx - x).min(y - 1).min(spec.ny - y);
        if d_out < self.outer {
            Region::Outer
        } else if spec
            .hole()
            .is_some_and(|h| h.chebyshev((x, y)) <= self.inner)
        {
            Region::Inner
        } else {
            Region::Bulk
        }
    }

    pub fn regions(&self, spec: &LatticeSpec, index: &SiteIndex) -> Vec<Region> {
        index
            .coords()
            .iter()
            .map(|&c| self.region(spec, c))
            .collect()
    }
}
