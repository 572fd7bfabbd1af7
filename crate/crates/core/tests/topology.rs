use proptest::prelude::*;
use ringlattice::drive::AlphaScan;
use ringlattice::error::Error;
use ringlattice::lattice::{gcd, Hamiltonian, LatticeSpec};
use ringlattice::spectrum::{diagonalize, find_gaps, ClassifyParams, CLOSED_GAP};
use ringlattice::topology::{
    all_windings, chern_fhs, chern_fhs_bands, chern_from_windings, count_crossings,
    diophantine_winding, extract_winding, harper, spectral_flow, touching_bands, SpectralFlow,
    WindingParams,
};

const GRID: usize = 20;

fn cherns(v: &[ringlattice::topology::ChernRecord]) -> Vec<i64> {
    v.iter().map(|c| c.chern).collect()
}

#[test]
fn quarter_flux_windings() {
    let w = all_windings(1, 4).unwrap();
    assert_eq!((w[0].s, w[0].t, w[0].degenerate), (0, 1, false));
    assert!(w[1].degenerate);
    assert_eq!(w[1].t.abs(), 2);
    assert_eq!((w[2].s, w[2].t), (1, -1));
    let lower = w[1].with_branch(-2).unwrap();
    assert_eq!((lower.s, lower.t), (1, -2));
    assert!(w[1].with_branch(1).is_err());
}

#[test]
fn fifth_flux_windings_and_cherns() {
    let w = all_windings(1, 5).unwrap();
    assert_eq!(
        w.iter().map(|r| r.t).collect::<Vec<_>>(),
        vec![1, 2, -2, -1]
    );
    let c = chern_from_windings(&w, &[1, 2, 3, 4, 5]).unwrap();
    assert_eq!(cherns(&c), vec![1, 1, -4, 1, 1]);
    let f = chern_fhs(1, 5, GRID).unwrap();
    assert_eq!(cherns(&f), vec![1, 1, -4, 1, 1]);
}

#[test]
fn quarter_flux_cherns() {
    let w = all_windings(1, 4).unwrap();
    let c = chern_from_windings(&w, &[1, 4]).unwrap();
    assert_eq!(cherns(&c), vec![1, 1]);
    assert!(matches!(
        chern_from_windings(&w, &[2]),
        Err(Error::DegenerateWinding { h: 2, q: 4 })
    ));
    let branch = vec![w[0], w[1].with_branch(-2).unwrap(), w[2]];
    assert_eq!(
        cherns(&chern_from_windings(&branch, &[1, 2, 3, 4]).unwrap()),
        vec![1, -3, 1, 1]
    );

    assert_eq!(touching_bands(1, 4, GRID).unwrap(), vec![2, 3]);
    assert_eq!(
        cherns(&chern_fhs_bands(1, 4, GRID, &[1, 4]).unwrap()),
        vec![1, 1]
    );
    assert!(matches!(
        chern_fhs_bands(1, 4, GRID, &[2]),
        Err(Error::BandTouching(_))
    ));
}

/// The two Chern routes agree on every non-touching band with `q <= 8`.
#[test]
fn fhs_matches_diophantine() {
    let mut checked = 0;
    for q in 2..=8u32 {
        for p in 1..q {
            if gcd(p as u64, q as u64) != 1 {
                continue;
            }
            let touching = touching_bands(p, q, GRID).unwrap();
            let w = all_windings(p, q).unwrap();
            let bands: Vec<u32> = (1..=q)
                .filter(|b| !touching.contains(b))
                .filter(|&b| {
                    let deg = |h: u32| h > 0 && h < q && w[h as usize - 1].degenerate;
                    !deg(b) && !deg(b - 1)
                })
                .collect();
            if q > 2 {
                assert!(!bands.is_empty(), "{p}/{q}");
            }
            checked += bands.len();
            let a = chern_from_windings(&w, &bands).unwrap();
            let b = chern_fhs_bands(p, q, GRID, &bands).unwrap();
            assert_eq!(a, b, "p/q = {p}/{q}");
            if touching.is_empty() {
                assert_eq!(b.iter().map(|c| c.chern).sum::<i64>(), 0);
            }
        }
    }
    assert!(checked > 80, "{checked}");
}

#[test]
fn fhs_is_grid_independent() {
    for grid in [8, 12, 31] {
        assert_eq!(
            cherns(&chern_fhs(2, 7, grid).unwrap()),
            cherns(&chern_fhs(2, 7, GRID).unwrap())
        );
    }
    assert!(chern_fhs(1, 3, 5).is_err());
    assert_eq!(cherns(&chern_fhs(0, 1, GRID).unwrap()), vec![0]);
}

#[test]
fn harper_is_hermitian() {
    let m = harper(3, 7, 0.4, 1.3);
    for i in 0..7 {
        for j in 0..7 {
            assert!((m[[i, j]] - m[[j, i]].conj()).norm() < 1e-15);
        }
    }
}

#[test]
fn diophantine_rejects_bad_input() {
    assert!(diophantine_winding(2, 4, 1).is_err());
    assert!(diophantine_winding(1, 4, 0).is_err());
    assert!(diophantine_winding(1, 4, 4).is_err());
}

#[test]
fn crossing_counter() {
    // A peak sliding down through 0.5 once, another sliding up once.
    let down: Vec<Vec<f64>> = vec![vec![0.53], vec![0.51], vec![0.49], vec![0.47]];
    assert_eq!(count_crossings(&down, 0.5, 0.05), (1, 0));
    let up: Vec<Vec<f64>> = down.iter().rev().cloned().collect();
    assert_eq!(count_crossings(&up, 0.5, 0.05), (-1, 0));
    // Too large a jump across the reference is ambiguous.
    let jump: Vec<Vec<f64>> = vec![vec![0.6], vec![0.4]];
    assert_eq!(count_crossings(&jump, 0.5, 0.05), (0, 1));
    // Peaks appearing or vanishing away from the reference are ignored.
    let fade: Vec<Vec<f64>> = vec![vec![0.2], vec![0.2, 0.8], vec![0.8]];
    assert_eq!(count_crossings(&fade, 0.5, 0.05), (0, 0));
}

/// `|t|` Lorentzian channels, each sweeping the band once per cycle.
fn synthetic_scan(t: i64, frames: usize) -> AlphaScan {
    let omega: Vec<f64> = (0..=400).map(|i| i as f64 * 0.0025).collect();
    let alpha: Vec<f64> = (0..frames)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / (frames - 1) as f64)
        .collect();
    let k_p = vec![0.0, 1.0];
    let mut n_mp = Vec::new();
    for &a in &alpha {
        for ik in 0..k_p.len() {
            for &w in &omega {
                let mut v = 1e-3;
                // `|t|` evenly spaced channels, the second k line sees only one.
                let channels = if ik == 0 { t.unsigned_abs() } else { 1 };
                for c in 0..channels {
                    let shift =
                        0.1 + c as f64 / t.unsigned_abs() as f64 + a / (2.0 * std::f64::consts::PI);
                    let centre = if t > 0 { 1.0 - shift } else { shift }.rem_euclid(1.0);
                    v += 1.0 / (1.0 + ((w - centre) / 0.01).powi(2));
                }
                n_mp.push(v);
            }
        }
    }
    AlphaScan {
        sites: vec![(1, 1)],
        strength: 1.0,
        alpha,
        k_p,
        omega,
        n_mp,
    }
}

#[test]
fn extraction_on_synthetic_scan() {
    for t in [1, 2, -1, -3] {
        let scan = synthetic_scan(t, 161);
        let x = extract_winding(&scan, &WindingParams::default()).unwrap();
        assert_eq!(x.t, t, "{x:?}");
        assert_eq!(x.per_k[1], t.signum());
    }
    let coarse = synthetic_scan(1, 5);
    assert!(matches!(
        extract_winding(&coarse, &WindingParams::default()),
        Err(Error::AmbiguousPeaks(_))
    ));
}

proptest! {
    #[test]
    fn diophantine_invariants(q in 2u32..40, p in 1u32..40) {
        prop_assume!(p < q && gcd(p as u64, q as u64) == 1);
        let w = all_windings(p, q).unwrap();
        for r in &w {
            prop_assert_eq!(r.h as i64, r.s * q as i64 + r.t * p as i64);
            prop_assert!(2 * r.t.abs() <= q as i64);
            prop_assert_eq!(r.degenerate, 2 * r.t.abs() == q as i64);
        }
        if q % 2 == 1 {
            let bands: Vec<u32> = (1..=q).collect();
            let c = chern_from_windings(&w, &bands).unwrap();
            prop_assert_eq!(c.iter().map(|c| c.chern).sum::<i64>(), 0);
        }
    }
}

/// Levels of the finite lattice crossing mid-gap as the vacancy flux turns
/// once: `t` on the outer edge, `-t` on the inner edge.
#[test]
fn spectral_flow_matches_diophantine() {
    let params = ClassifyParams::default();
    for (q, gaps, branch) in [(4u32, [1u32, 3], [1i64, -1]), (5, [2, 3], [2, -2])] {
        let spec = LatticeSpec::standard(1, q);
        let h = Hamiltonian::build(&spec, None).unwrap();
        let table = find_gaps(&diagonalize(&h, &params).unwrap(), 1, q, CLOSED_GAP).unwrap();
        for (g, t) in gaps.into_iter().zip(branch) {
            assert_eq!(diophantine_winding(1, q, g).unwrap().t, t);
            let flow = spectral_flow(&spec, table.gap(g).unwrap().centre(), 65, &params).unwrap();
            assert_eq!(
                flow,
                SpectralFlow {
                    outer: t,
                    inner: -t,
                    bulk: 0
                },
                "q = {q}, gap {g}"
            );
        }
    }
    assert!(spectral_flow(&LatticeSpec::standard(1, 4), 0.0, 1, &params).is_err());
}
