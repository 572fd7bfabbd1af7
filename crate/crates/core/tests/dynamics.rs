use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use ringlattice::drive::{dynamical_matrix, DecayParams, DecaySpec, PumpSpec};
use ringlattice::dynamics::{
    chiral_metric, defect_run, evolve, integrate, norm_rate, observation_grid, panel_times,
    Direction, Edge, Propagation,
};
use ringlattice::error::Error;
use ringlattice::lattice::{DisorderSpec, Flux, Hamiltonian, LatticeSpec, RegionDepth};
use ringlattice::linalg::EigenSystem;

fn single_site(eps: f64) -> Hamiltonian {
    let spec = LatticeSpec {
        nx: 1,
        ny: 1,
        hole_x: 0,
        hole_y: 0,
        ..LatticeSpec::standard(0, 1)
    };
    let d = DisorderSpec {
        defects: vec![((1, 1), eps)],
        ..DisorderSpec::default()
    };
    Hamiltonian::build(&spec, Some(&d)).unwrap()
}

fn small(seed: u64) -> Hamiltonian {
    let spec = LatticeSpec {
        nx: 10,
        ny: 10,
        hole_x: 2,
        hole_y: 2,
        ..LatticeSpec::standard(1, 3)
    };
    let d = DisorderSpec {
        sigma_diag: 0.05,
        sigma_offdiag: 0.05,
        seed,
        defects: vec![],
    };
    Hamiltonian::build(&spec, Some(&d)).unwrap()
}

/// `x(t) = x_ss (1 - exp(-i (eps - Omega - i kappa/2) t))`.
#[test]
fn single_site_closed_form() {
    let (eps, kappa, omega, p) = (0.3, 0.2, -0.4, 1.5);
    let h = single_site(eps);
    let decay = DecaySpec::uniform(1, kappa).unwrap();
    let pump = PumpSpec::single((1, 1), p, omega);
    let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.7).collect();
    let l = Complex64::new(eps - omega, -0.5 * kappa);
    let xss = -Complex64::new(p, 0.0) / l;
    for method in [Propagation::Eigen, Propagation::Integrate] {
        let tr = evolve(&h, &pump, &decay, &times, method).unwrap();
        assert_eq!(tr.method, method);
        for (t, x) in times.iter().zip(&tr.snapshots) {
            let expect = xss * (1.0 - (Complex64::new(0.0, -*t) * l).exp());
            assert!(
                (x[0] - expect).norm() < 1e-8 * xss.norm(),
                "{method:?} t = {t}"
            );
        }
    }
}

#[test]
fn integrator_matches_eigen_propagation() {
    let h = small(5);
    let pump = PumpSpec::single((1, 5), 1.0, 1.2);
    let decay = DecayParams::default().build(&h.index, &[(1, 5)]).unwrap();
    let times = observation_grid(&[60.0], 3.0);
    let a = evolve(&h, &pump, &decay, &times, Propagation::Eigen).unwrap();
    let b = evolve(&h, &pump, &decay, &times, Propagation::Integrate).unwrap();
    let scale = a.steady.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        let err = x
            .iter()
            .zip(y)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-7 * scale, "{err} vs {scale}");
    }
    let auto = evolve(&h, &pump, &decay, &times, Propagation::Auto).unwrap();
    assert_eq!(auto.method, Propagation::Eigen);
}

#[test]
fn converges_to_steady_state() {
    let h = small(2);
    let pump = PumpSpec::single((1, 5), 1.0, 0.4);
    let decay = DecaySpec::uniform(h.dim(), 0.3).unwrap();
    let tr = evolve(&h, &pump, &decay, &[0.0, 400.0], Propagation::Eigen).unwrap();
    assert!(tr.snapshots[0].iter().all(|z| z.norm() < 1e-12));
    let err = tr.snapshots[1]
        .iter()
        .zip(&tr.steady)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn full_lattice_is_stable() {
    let h = Hamiltonian::build(&LatticeSpec::standard(1, 4), None).unwrap();
    let decay = DecayParams::default().build(&h.index, &[(1, 13)]).unwrap();
    let a = dynamical_matrix(&h, &decay).unwrap();
    let e = EigenSystem::new(&a).unwrap();
    // Evolution is exp(-i lambda t): decay needs Im(lambda) <= -kappa_min / 2.
    let worst = e
        .values
        .iter()
        .map(|l| l.im)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= -0.5 * decay.min() + 1e-12, "{worst}");
}

/// Central differences of `|x|^2` against the equation-of-motion rate.
#[test]
fn energy_balance_along_trajectory() {
    let h = Hamiltonian::build(&LatticeSpec::standard(1, 4), None).unwrap();
    let pump = PumpSpec::single((1, 13), 2.0, 1.47);
    let decay = DecayParams::default().build(&h.index, &[(1, 13)]).unwrap();
    let dt = 1e-3;
    let centres = [1.0, 7.5, 20.0, 63.0];
    let times: Vec<f64> = centres.iter().flat_map(|&t| [t - dt, t, t + dt]).collect();
    let tr = evolve(&h, &pump, &decay, &times, Propagation::Eigen).unwrap();
    let p = pump.vector(&h.index).unwrap();
    for k in 0..centres.len() {
        let n = |i: usize| {
            tr.snapshots[3 * k + i]
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
        };
        let fd = (n(2) - n(0)) / (2.0 * dt);
        let rate = norm_rate(&tr.snapshots[3 * k + 1], &p, &tr.kappa);
        assert!(
            (fd - rate).abs() <= 1e-6 * rate.abs(),
            "t = {}: {fd} vs {rate}",
            centres[k]
        );
    }
}

#[test]
fn panels_and_grids() {
    let p = panel_times(6.0, 13.0, 3);
    assert_eq!(p.len(), 3);
    assert!((p[2] - 2.0 * PI * 32.0).abs() < 1e-12);
    let g = observation_grid(&p, 1.0);
    assert_eq!(g[0], 0.0);
    assert!(p.iter().all(|t| g.contains(t)));
    assert!(g.windows(2).all(|w| w[1] > w[0]));
    assert!(evolve(
        &small(1),
        &PumpSpec::single((1, 5), 1.0, 0.0),
        &DecaySpec::uniform(96, 0.1).unwrap(),
        &[],
        Propagation::Auto
    )
    .is_err());
}

fn flow(flux: Flux, site: (u32, u32), omega: f64, edge: Edge) -> Direction {
    let spec = LatticeSpec::standard(1, 4).with_flux(flux);
    let h = Hamiltonian::build(&spec, None).unwrap();
    let pump = PumpSpec::single(site, 2.0, omega);
    let decay = DecayParams::default().build(&h.index, &[site]).unwrap();
    let times = observation_grid(&[2.0 * PI * 7.0], 0.5);
    let tr = evolve(&h, &pump, &decay, &times, Propagation::Auto).unwrap();
    chiral_metric(&tr, &h, edge, &RegionDepth::default())
        .unwrap()
        .direction
}

#[test]
fn conjugate_flux_reverses_flow() {
    for omega in [1.47, -1.76] {
        let a = flow(Flux::Rational { p: 1, q: 4 }, (1, 13), omega, Edge::Outer);
        let b = flow(Flux::Rational { p: 3, q: 4 }, (1, 13), omega, Edge::Outer);
        assert_ne!(a, b, "Omega = {omega}");
    }
}

#[test]
fn zero_pump_has_no_centroid() {
    let h = Hamiltonian::build(&LatticeSpec::standard(1, 4), None).unwrap();
    let pump = PumpSpec::single((1, 13), 0.0, 1.47);
    let decay = DecayParams::default().build(&h.index, &[(1, 13)]).unwrap();
    let tr = evolve(&h, &pump, &decay, &[0.0, 1.0], Propagation::Eigen).unwrap();
    assert!(matches!(
        chiral_metric(&tr, &h, Edge::Outer, &RegionDepth::default()),
        Err(Error::CentroidUndefined(_))
    ));
}

#[test]
fn clean_defect_run_matches_evolve() {
    let spec = LatticeSpec::standard(1, 4);
    let clean = Hamiltonian::build(&spec, Some(&DisorderSpec::default())).unwrap();
    let bare = Hamiltonian::build(&spec, None).unwrap();
    let pump = PumpSpec::single((1, 13), 2.0, -1.75);
    let decay = DecayParams::default()
        .build(&bare.index, &[(1, 13)])
        .unwrap();
    let times = [0.0, 10.0, 40.0];
    let run = defect_run(
        &clean,
        &pump,
        &decay,
        &times,
        Edge::Outer,
        &RegionDepth::default(),
    )
    .unwrap();
    let plain = evolve(&bare, &pump, &decay, &times, Propagation::Auto).unwrap();
    for (a, b) in run.trajectory.snapshots.iter().zip(&plain.snapshots) {
        assert_eq!(a, b);
    }
    assert_eq!(run.max_fraction(), 0.0);
    assert!(run.max_fraction().is_sign_positive());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn integrator_energy_balance(seed in any::<u64>(), omega in -3.0..3.0f64) {
        let h = small(seed);
        let pump = PumpSpec::single((1, 5), 1.0, omega);
        let decay = DecayParams::default().build(&h.index, &[(1, 5)]).unwrap();
        let a = dynamical_matrix(&h, &decay).unwrap();
        let p = pump.vector(&h.index).unwrap();
        let dt = 2e-3;
        let times: Vec<f64> = (-2..=2).map(|i| 5.0 + i as f64 * dt).collect();
        let xs = integrate(&a, omega, &p, &times, 1e-13).unwrap();
        let n: Vec<f64> = xs.iter().map(|x| x.iter().map(|z| z.norm_sqr()).sum::<f64>()).collect();
        let fd = (n[0] - 8.0 * n[1] + 8.0 * n[3] - n[4]) / (12.0 * dt);
        let rate = norm_rate(&xs[2], &p, decay.kappa());
        prop_assert!((fd - rate).abs() <= 1e-6 * rate.abs().max(1e-3), "{} vs {}", fd, rate);
    }
}
