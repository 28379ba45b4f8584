use std::f64::consts::PI;

use manifold_core::functionals::{
    a_chain, b_discrete, EuclideanModelSpec, LevelChain, SphericalModelSpec,
};
use manifold_core::instances::{random_correlation, random_psd, random_spherical, sorted_uniform};
use manifold_core::kdual::lambda;
use manifold_core::lattice::{LatticeSpec, Mat};
use manifold_core::mixing::{CorrelationFunction, MixingFunction};
use manifold_core::optimize::{
    boundary_gap, minimize_b, minimize_full, minimize_projected, minimize_s, project_isotonic,
    sup_over_q, Form, KktFlag, Locations, Target,
};
use manifold_core::profiles::{talagrand_to_continuum, TalagrandProfile};
use manifold_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

fn one_site(xi: Vec<f64>) -> SphericalModelSpec {
    SphericalModelSpec::new(
        Mat::zeros(1, 1),
        vec![MixingFunction::new(xi).unwrap()],
        vec![0.0],
    )
    .unwrap()
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn scalar_b_star_matches_bisection() {
    let spec = one_site(vec![0.0, 0.0, 1.0]);
    for s1 in [0.0, 0.3, 0.6] {
        let p = TalagrandProfile::from_interior(&[], &[vec![s1]]).unwrap();
        let chain = LevelChain::from_talagrand(&p);
        let d0 = chain.d_sequence(&spec.xi)[0][0];
        let slope = |b: f64| {
            let h = 1e-6;
            (a_chain(&spec, &chain, &[b + h]).unwrap().report.value
                - a_chain(&spec, &chain, &[b - h]).unwrap().report.value)
                / (2.0 * h)
        };
        let oracle = bisect(slope, d0 + 1e-3, d0 + 50.0);
        let sol = minimize_b(&spec, &chain, None).unwrap();
        assert!(
            (sol.b[0] - oracle).abs() < 1e-6,
            "s1={s1}: {} vs {oracle}",
            sol.b[0]
        );
        assert!(sol.residual < 1e-10);
    }
}

#[test]
fn hessian_in_b_is_positive_definite_at_the_minimum() {
    for i in 0..10 {
        let mut rng = stream(6, "opt-hess", i);
        let n = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let m = sorted_uniform(&mut rng, 1, 0.2, 0.8);
        let s: Locations = (0..n)
            .map(|_| sorted_uniform(&mut rng, 2, 0.0, 0.9))
            .collect();
        let chain = LevelChain::from_talagrand(&TalagrandProfile::from_interior(&m, &s).unwrap());
        let sol = minimize_b(&spec, &chain, None).unwrap();
        let h = 1e-4;
        let f = |b: &[f64]| a_chain(&spec, &chain, b).unwrap().report.value;
        let hess = Mat::from_fn(n, n, |x, y| {
            let at = |dx: f64, dy: f64| {
                let mut b = sol.b.clone();
                b[x] += dx;
                b[y] += dy;
                f(&b)
            };
            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
        });
        assert!(hess.symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn replica_symmetric_minimizer_matches_golden_section() {
    // One site, D = 0, h = 0, ξ = c·x²: ℬ(q) = ½[log 2π + log(1−q) + 1/(1−q) + c − c q²].
    for c in [0.3, 1.0, 2.0] {
        let spec = one_site(vec![0.0, 0.0, c]);
        let hand =
            |q: f64| 0.5 * ((2.0 * PI).ln() + (1.0 - q).ln() + 1.0 / (1.0 - q) + c - c * q * q);
        let oracle = golden_min(hand, 0.0, 0.99);
        let sol = minimize_s(&spec, &[], Target::B, None).unwrap();
        assert!(
            (sol.profile.s[0][1] - oracle).abs() < 1e-6,
            "c={c}: {} vs {oracle}",
            sol.profile.s[0][1]
        );
        assert!((sol.value - hand(oracle)).abs() < 1e-10);
    }
}

#[test]
fn certificates_hold_at_minimizers() {
    for i in 0..12 {
        let mut rng = stream(6, "opt-cert", i);
        let n = 1 + (i as usize % 3);
        let r = 1 + (i as usize / 3) % 3;
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let m = sorted_uniform(&mut rng, r - 1, 0.1, 0.9);
        for target in [Target::B, Target::A] {
            let sol = minimize_s(&spec, &m, target, None).unwrap();
            let cert = &sol.certificate;
            assert!(
                cert.residual_cs1 < 1e-6 && cert.residual_csb < 1e-6,
                "{cert:?}"
            );
            assert!(cert.gap_ab < 1e-6, "{cert:?}");
            assert!(cert.kkt_violation < 1e-6, "{cert:?}");
        }
    }
}

#[test]
fn zero_mixing_value_does_not_depend_on_levels() {
    let mut rng = stream(6, "opt-zero", 0);
    let d = random_psd(&mut rng, 2, 1.0);
    let spec =
        SphericalModelSpec::new(d.clone(), vec![MixingFunction::zero(); 2], vec![0.0; 2]).unwrap();
    let want = 0.5 * ((2.0 * PI).ln() + lambda(&d, &[1.0, 1.0]).unwrap());
    for r in 1..=3 {
        let sol = minimize_full(&spec, r, Form::TalagrandB, 4, 1).unwrap();
        assert!(
            (sol.value - want).abs() < 1e-8,
            "r={r}: {} vs {want}",
            sol.value
        );
    }
}

#[test]
fn more_levels_never_increase_the_value() {
    for i in 0..4 {
        let mut rng = stream(6, "opt-levels", i);
        let n = 1 + i as usize % 2;
        let spec = random_spherical(&mut rng, n, 1.5, true);
        let v1 = minimize_full(&spec, 1, Form::TalagrandB, 4, 2)
            .unwrap()
            .value;
        let v2 = minimize_full(&spec, 2, Form::TalagrandB, 4, 2)
            .unwrap()
            .value;
        let v3 = minimize_full(&spec, 3, Form::TalagrandB, 4, 2)
            .unwrap()
            .value;
        assert!(v2 <= v1 + 2e-6 && v3 <= v2 + 2e-6, "{v1} {v2} {v3}");
    }
}

#[test]
fn replica_symmetric_regime_needs_one_level() {
    for i in 0..3 {
        let mut rng = stream(6, "opt-rs", i);
        let spec = random_spherical(&mut rng, 2, 0.3, true);
        let v1 = minimize_full(&spec, 1, Form::TalagrandB, 4, 3)
            .unwrap()
            .value;
        let v2 = minimize_full(&spec, 2, Form::TalagrandB, 4, 3)
            .unwrap()
            .value;
        assert!((v1 - v2).abs() < 2e-6);
    }
}

#[test]
fn full_minimum_is_invariant_under_site_relabeling() {
    let mut rng = stream(6, "opt-perm", 0);
    let spec = random_spherical(&mut rng, 3, 1.0, true);
    let perm = [2usize, 0, 1];
    let d = Mat::from_fn(3, 3, |x, y| spec.d[(perm[x], perm[y])]);
    let spec2 = SphericalModelSpec::new(
        d,
        perm.iter().map(|&x| spec.xi[x].clone()).collect(),
        perm.iter().map(|&x| spec.h[x]).collect(),
    )
    .unwrap();
    let a = minimize_full(&spec, 2, Form::TalagrandB, 8, 4)
        .unwrap()
        .value;
    let b = minimize_full(&spec2, 2, Form::TalagrandB, 8, 4)
        .unwrap()
        .value;
    assert!((a - b).abs() < 1e-7);
}

#[test]
fn talagrand_and_panchenko_infima_agree() {
    for i in 0..3 {
        let mut rng = stream(6, "opt-forms", i);
        let spec = random_spherical(&mut rng, 2, 0.5, true);
        let t = minimize_full(&spec, 1, Form::TalagrandA, 4, 5)
            .unwrap()
            .value;
        let p = minimize_full(&spec, 2, Form::PanchenkoA, 4, 5)
            .unwrap()
            .value;
        assert!((t - p).abs() < 3e-6);
    }
}

#[test]
fn boundary_gap_is_negative_without_disorder() {
    let mut rng = stream(6, "opt-gap-zero", 0);
    let d = random_psd(&mut rng, 2, 1.0);
    let spec = SphericalModelSpec::new(d, vec![MixingFunction::zero(); 2], vec![0.0; 2]).unwrap();
    let p = TalagrandProfile::from_interior(&[0.5], &[vec![0.2, 0.6], vec![0.3, 0.5]]).unwrap();
    let c = talagrand_to_continuum(&p).unwrap();
    for q_m in [0.1, 0.4, 0.6] {
        assert!(boundary_gap(&spec, &c, q_m, 32)
            .unwrap()
            .iter()
            .all(|g| *g < 0.0));
    }
}

#[test]
fn boundary_gap_tracks_last_location_derivative() {
    for i in 0..10 {
        let mut rng = stream(6, "opt-gap", i);
        let n = rng.random_range(1..=3);
        let r = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let m = sorted_uniform(&mut rng, r - 1, 0.1, 0.9);
        let s: Locations = (0..n)
            .map(|_| sorted_uniform(&mut rng, r, 0.05, 0.9))
            .collect();
        let p = TalagrandProfile::from_interior(&m, &s).unwrap();
        let c = talagrand_to_continuum(&p).unwrap();
        let grad = b_discrete(&spec, &p).unwrap().grad_s;
        let q_m = c.last_atom();
        let gap = boundary_gap(&spec, &c, q_m, 48).unwrap();
        let scale = 2.0 * n as f64 / (1.0 - p.m[r - 1]);
        for x in 0..n {
            assert!(
                (-gap[x] - scale * grad[x][r - 1]).abs() < 1e-8,
                "{} vs {}",
                -gap[x],
                scale * grad[x][r - 1]
            );
        }
    }
}

#[test]
fn boundary_gap_is_nonnegative_at_interior_minimizers() {
    for i in 0..6 {
        let mut rng = stream(6, "opt-gap-min", i);
        let n = 1 + i as usize % 3;
        let spec = random_spherical(&mut rng, n, 2.0, true);
        let sol = minimize_s(&spec, &[], Target::B, None).unwrap();
        if sol
            .certificate
            .kkt_flags
            .iter()
            .any(|f| f[0] != KktFlag::Interior)
        {
            continue;
        }
        let c = talagrand_to_continuum(&sol.profile).unwrap();
        let gap = boundary_gap(&spec, &c, c.last_atom(), 48).unwrap();
        assert!(gap.iter().all(|g| *g >= -1e-6), "{gap:?}");
    }
}

fn euclid(l: usize, b: CorrelationFunction, h: f64) -> EuclideanModelSpec {
    EuclideanModelSpec {
        lattice: LatticeSpec {
            l,
            d: 1,
            mu: 1.3,
            t: 0.7,
        },
        b,
        h,
        beta: 1.0,
    }
}

#[test]
fn zero_disorder_sup_is_at_the_stationary_cap() {
    let spec = euclid(1, CorrelationFunction::new(0.0, vec![]).unwrap(), 0.4);
    let mu = spec.lattice.mu;
    let sup = sup_over_q(&spec, 0.05, 1, 9, 2, 7).unwrap();
    // Inner value ½(log 2π + 1 − μq + log q) + h²/2μ is maximized where 1/q = μ.
    let want = 0.5 * (2.0 * PI / mu).ln() + 0.4 * 0.4 / (2.0 * mu);
    assert!((sup.q[0] - 1.0 / mu).abs() < 1e-5);
    assert!((sup.value - want).abs() < 1e-8);
}

#[test]
fn one_site_sup_is_stable_under_grid_refinement() {
    let b = random_correlation(&mut stream(6, "opt-refine", 0), 2, 0.8);
    let spec = euclid(1, b, 0.2);
    let coarse = sup_over_q(&spec, 0.05, 1, 9, 2, 8).unwrap().value;
    let fine = sup_over_q(&spec, 0.05, 1, 17, 2, 8).unwrap().value;
    assert!((coarse - fine).abs() < 1e-5);
}

#[test]
fn translation_invariant_lattice_gives_constant_cap() {
    let b = CorrelationFunction::new(0.1, vec![(0.4, 1.0)]).unwrap();
    let spec = euclid(2, b, 0.0);
    let sup = sup_over_q(&spec, 0.05, 1, 9, 2, 9).unwrap();
    assert!((sup.q[0] - sup.q[1]).abs() < 1e-6, "{:?}", sup.q);
}

fn quad_objective(
    target: Vec<Vec<f64>>,
    weights: Vec<f64>,
) -> impl Fn(&Locations) -> manifold_core::Result<(f64, Locations)> {
    move |x: &Locations| {
        let mut v = 0.0;
        let mut g = x.clone();
        for (i, row) in x.iter().enumerate() {
            for (j, xv) in row.iter().enumerate() {
                let d = xv - target[i][j];
                v += 0.5 * weights[j] * d * d;
                g[i][j] = weights[j] * d;
            }
        }
        Ok((v, g))
    }
}

#[test]
fn projected_solver_finds_feasible_quadratic_minimum() {
    let target = vec![vec![0.1, 0.4, 0.7], vec![0.0, 0.5, 0.5]];
    let f = quad_objective(target.clone(), vec![1.0, 10.0, 0.1]);
    let res = minimize_projected(&f, &vec![vec![0.5; 3]; 2], 0.0, 1.0).unwrap();
    for (a, b) in res.x.iter().flatten().zip(target.iter().flatten()) {
        assert!((a - b).abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn isotonic_projection_is_the_nearest_ordered_point(v in prop::collection::vec(-1.0f64..2.0, 1..8), seed in 0u64..1000) {
        let mut p = v.clone();
        project_isotonic(&mut p, 0.0, 1.0);
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        let mut again = p.clone();
        project_isotonic(&mut again, 0.0, 1.0);
        prop_assert_eq!(&again, &p);
        let dist = |w: &[f64]| v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let w = sorted_uniform(&mut stream(seed, "opt-prop-iso", 0), v.len(), 0.0, 1.0);
        prop_assert!(dist(&p) <= dist(&w) + 1e-12);
    }

    #[test]
    fn b_minimum_lies_below_any_b(seed in 0u64..1000, n in 1usize..4) {
        let mut rng = stream(seed, "opt-prop-b", 0);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let s: Locations = (0..n).map(|_| sorted_uniform(&mut rng, 1, 0.0, 0.9)).collect();
        let chain = LevelChain::from_talagrand(&TalagrandProfile::from_interior(&[], &s).unwrap());
        let sol = minimize_b(&spec, &chain, None).unwrap();
        let b: Vec<f64> = sol.b.iter().map(|v| v + rng.random_range(-0.05..0.5)).collect();
        if let Ok(e) = a_chain(&spec, &chain, &b) {
            prop_assert!(e.report.value >= sol.eval.report.value - 1e-12);
        }
    }
}
