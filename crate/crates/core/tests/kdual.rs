use manifold_core::instances::random_psd;
use manifold_core::kdual::{boundary_epsilon, lambda, solve_k, DEFAULT_TOL};
use manifold_core::lattice::{is_pd, plus_diag, Mat};
use manifold_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn symmetric_two_site_matches_scalar_quadratic() {
    let d = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
    let p = solve_k(&d, &[0.4, 0.4], DEFAULT_TOL).unwrap();
    // With K = (k, k) and a = 1 + k, the inverse diagonal is a/(a² − 0.09) = 0.4.
    let a = (1.0 + (1.0f64 + 4.0 * 0.4 * 0.036).sqrt()) / (2.0 * 0.4);
    assert!((p.k[0] - (a - 1.0)).abs() < 1e-10);
    assert!((p.k[1] - (a - 1.0)).abs() < 1e-10);
    assert!((p.k[0] - 1.5355).abs() < 1e-4);
}

#[test]
fn lambda_gradient_matches_k() {
    for i in 0..20 {
        let mut rng = stream(3, "kdual-grad", i);
        let n = rng.random_range(1..=5);
        let d = random_psd(&mut rng, n, 1.0);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let k = solve_k(&d, &u, DEFAULT_TOL).unwrap().k;
        for x in 0..n {
            let h = 1e-5 * u[x];
            let mut up = u.clone();
            up[x] += h;
            let mut dn = u.clone();
            dn[x] -= h;
            let fd = n as f64 * (lambda(&d, &up).unwrap() - lambda(&d, &dn).unwrap()) / (2.0 * h);
            assert!((fd - k[x]).abs() < 1e-6 * k.amax().max(1.0));
        }
    }
}

#[test]
fn epsilon_is_nonincreasing_under_nested_sweeps() {
    let mut rng = stream(3, "kdual-nested", 0);
    let d = random_psd(&mut rng, 3, 1.0);
    let mut points: Vec<Vec<f64>> = vec![];
    let mut last = f64::INFINITY;
    for k_box in [0.5, 2.0, 10.0, 50.0] {
        points.extend((0..50).map(|_| {
            (0..3)
                .map(|_| k_box * rng.random::<f64>().max(1e-6))
                .collect::<Vec<f64>>()
        }));
        let eps = boundary_epsilon(&d, &points).unwrap().epsilon;
        assert!(eps > 0.0);
        assert!(eps <= last);
        last = eps;
    }
}

proptest! {
    #[test]
    fn solution_meets_tolerance_and_stays_pd(seed in 0u64..10_000, n in 1usize..6) {
        let mut rng = stream(seed, "kdual-prop", 0);
        let scale = rng.random_range(0.01..5.0);
        let d = random_psd(&mut rng, n, scale);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..20.0)).collect();
        let p = solve_k(&d, &u, DEFAULT_TOL).unwrap();
        prop_assert!(p.residual <= DEFAULT_TOL);
        prop_assert!(is_pd(&plus_diag(&d, p.k.as_slice())));
    }

    #[test]
    fn jacobian_is_negative_definite(seed in 0u64..10_000, n in 1usize..5) {
        let mut rng = stream(seed, "kdual-jac", 0);
        let d = random_psd(&mut rng, n, 1.0);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let j = solve_k(&d, &u, DEFAULT_TOL).unwrap().grad_k().unwrap();
        prop_assert!((&j - j.transpose()).amax() < 1e-10 * j.amax());
        prop_assert!(j.symmetric_eigenvalues().max() < 0.0);
    }

    #[test]
    fn lambda_is_concave_along_segments(seed in 0u64..10_000, n in 1usize..5) {
        let mut rng = stream(seed, "kdual-concave", 0);
        let d = random_psd(&mut rng, n, 1.0);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let lm = lambda(&d, &mid).unwrap();
        prop_assert!(lm >= 0.5 * (lambda(&d, &a).unwrap() + lambda(&d, &b).unwrap()) - 1e-10);
    }
}
