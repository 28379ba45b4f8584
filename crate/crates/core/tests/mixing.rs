use manifold_core::instances::{random_correlation, random_mixing};
use manifold_core::mixing::{
    continuity_bound, spherical_restriction_auto, CorrelationFunction, MixingFunction,
};
use manifold_core::rng::stream;
use proptest::prelude::*;

#[test]
fn first_derivative_matches_central_difference() {
    let xi = MixingFunction::new(vec![0.1, 0.3, 0.5, 0.2, 0.05]).unwrap();
    let r = 0.3;
    let h = 1e-5;
    let fd = (xi.eval(r + h, 0) - xi.eval(r - h, 0)) / (2.0 * h);
    assert!(((xi.eval(r, 1) - fd) / fd).abs() < 1e-7);
}

#[test]
fn theta_derivative_is_r_times_second_derivative() {
    let xi = MixingFunction::new(vec![0.0, 0.0, 0.5, 0.25]).unwrap();
    let r = 0.4;
    let h = 1e-5;
    let fd = (xi.theta(r + h) - xi.theta(r - h)) / (2.0 * h);
    let exact = r * xi.d2(r);
    assert!(((fd - exact) / exact).abs() < 1e-7);
}

#[test]
fn correlation_derivative_matches_central_difference() {
    for i in 0..10 {
        let b = random_correlation(&mut stream(2, "mixing-b", i), 3, 2.0);
        let x = 0.7;
        let h = 1e-5;
        let fd = (b.eval(x + h, 0) - b.eval(x - h, 0)) / (2.0 * h);
        assert!((b.eval(x, 1) - fd).abs() < 1e-8 * (1.0 + fd.abs()));
    }
}

#[test]
fn restriction_reproduces_correlation_within_tail() {
    for i in 0..10 {
        let mut rng = stream(2, "mixing-restriction", i);
        let b = random_correlation(&mut rng, 3, 2.0);
        let q = rand::Rng::random_range(&mut rng, 0.2..2.0);
        let res = spherical_restriction_auto(&b, q, 1e-12).unwrap();
        for r in [0.0, 0.5, 1.0] {
            let err = (res.xi.eval(r, 0) - b.eval(2.0 * q * (1.0 - r), 0)).abs();
            assert!(err <= res.tail_bound + 1e-13, "q={q} r={r} err={err}");
        }
    }
}

#[test]
fn restriction_of_constant_is_constant() {
    let b = CorrelationFunction::new(2.0, vec![]).unwrap();
    let res = spherical_restriction_auto(&b, 0.7, 1e-14).unwrap();
    assert_eq!(res.xi.coeffs[0], 2.0);
    assert!(res.xi.coeffs[1..].iter().all(|c| *c == 0.0));
}

proptest! {
    #[test]
    fn continuity_bound_is_a_metric(seed in 0u64..1000, n in 1usize..4) {
        let mut rng = stream(seed, "mixing-metric", 0);
        let a: Vec<MixingFunction> = (0..n).map(|_| random_mixing(&mut rng, 3, 1.0)).collect();
        let b: Vec<MixingFunction> = (0..n).map(|_| random_mixing(&mut rng, 4, 1.0)).collect();
        let c: Vec<MixingFunction> = (0..n).map(|_| random_mixing(&mut rng, 2, 1.0)).collect();
        let ab = continuity_bound(&a, &b).unwrap();
        prop_assert_eq!(continuity_bound(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - continuity_bound(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!(ab <= continuity_bound(&a, &c).unwrap() + continuity_bound(&c, &b).unwrap() + 1e-14);
    }

    #[test]
    fn mixing_is_nondecreasing_and_convex(seed in 0u64..1000, r in 0.0f64..0.99) {
        let xi = random_mixing(&mut stream(seed, "mixing-shape", 0), 5, 1.0);
        prop_assert!(xi.d1(r) >= 0.0);
        prop_assert!(xi.d2(r) >= 0.0);
        prop_assert!(xi.value(r + 0.01) >= xi.value(r));
    }
}
