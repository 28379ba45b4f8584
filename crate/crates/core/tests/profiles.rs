use manifold_core::instances::{random_mixing, random_panchenko, random_talagrand};
use manifold_core::mixing::MixingFunction;
use manifold_core::profiles::{
    d_of, d_sequence_talagrand, delta_of, delta_sequence, panchenko_to_continuum,
    talagrand_to_continuum,
};
use manifold_core::quad::GaussLegendre;
use manifold_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn first_delta_matches_continuum_delta_at_zero() {
    for i in 0..20 {
        let mut rng = stream(4, "profiles-delta", i);
        let n = rng.random_range(1..=3);
        let r = rng.random_range(1..=4);
        let p = random_talagrand(&mut rng, r, n, 0.9);
        let c = talagrand_to_continuum(&p).unwrap();
        let disc = &delta_sequence(&p)[0];
        let cont = delta_of(&c, 0.0);
        for x in 0..n {
            assert!((disc[x] - cont[x]).abs() < 1e-12);
        }
    }
}

#[test]
fn first_d_matches_quadrature() {
    let gl = GaussLegendre::new(24);
    for i in 0..20 {
        let mut rng = stream(4, "profiles-d", i);
        let n = rng.random_range(1..=3);
        let r = rng.random_range(1..=4);
        let xi: Vec<MixingFunction> = (0..n).map(|_| random_mixing(&mut rng, 5, 1.0)).collect();
        let p = random_talagrand(&mut rng, r, n, 0.9);
        let c = talagrand_to_continuum(&p).unwrap();
        let disc = &d_sequence_talagrand(&p, &xi)[0];
        let cont = d_of(&c, &xi, 0.0, &gl);
        for x in 0..n {
            assert!((disc[x] - cont[x]).abs() < 1e-10);
        }
    }
}

#[test]
fn delta_is_nonincreasing_on_a_grid() {
    for i in 0..20 {
        let mut rng = stream(4, "profiles-mono", i);
        let n = rng.random_range(1..=3);
        let p = random_talagrand(&mut rng, 3, n, 0.9);
        let c = talagrand_to_continuum(&p).unwrap();
        let grid: Vec<Vec<f64>> = (0..50)
            .map(|k| delta_of(&c, c.q_t() * k as f64 / 49.0))
            .collect();
        for w in grid.windows(2) {
            assert!(w[1].iter().zip(&w[0]).all(|(b, a)| *b <= a + 1e-15));
        }
        assert!(grid[49].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn delta_above_q_star_is_gap_to_cap() {
    let mut rng = stream(4, "profiles-qstar", 0);
    let p = random_talagrand(&mut rng, 2, 2, 0.8);
    let c = talagrand_to_continuum(&p).unwrap();
    let a = c.last_atom();
    let c = c.with_q_star(a + 0.5 * (1.0 - a));
    for s in [c.q_star, 0.5 * (c.q_star + 1.0), 1.0] {
        let d = delta_of(&c, s);
        let ph = c.phi_at(s);
        for x in 0..2 {
            assert!((d[x] - (c.q_vec[x] - ph[x])).abs() < 1e-15);
        }
    }
}

proptest! {
    #[test]
    fn talagrand_conversion_is_valid(seed in 0u64..10_000, n in 1usize..4, r in 1usize..5) {
        let p = random_talagrand(&mut stream(seed, "profiles-prop-t", 0), r, n, 0.95);
        prop_assert!(p.validate().is_empty());
        let c = talagrand_to_continuum(&p).unwrap();
        prop_assert!(c.validate().is_empty(), "{:?}", c.validate());
        prop_assert!(c.averaging_residual() < 1e-14);
        prop_assert!((c.masses.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let back = c.to_talagrand().unwrap();
        prop_assert!((talagrand_to_continuum(&back).unwrap().averaging_residual()) < 1e-14);
    }

    #[test]
    fn panchenko_conversion_is_valid(seed in 0u64..10_000, n in 1usize..4, r in 1usize..5) {
        let p = random_panchenko(&mut stream(seed, "profiles-prop-p", 0), r, n);
        prop_assert!(p.validate().is_empty());
        let c = panchenko_to_continuum(&p).unwrap();
        prop_assert!(c.validate().is_empty(), "{:?}", c.validate());
        prop_assert!(c.averaging_residual() < 1e-14);
    }

    #[test]
    fn rescaling_keeps_the_averaging_constraint(seed in 0u64..10_000, n in 1usize..4) {
        let mut rng = stream(seed, "profiles-prop-scale", 0);
        let p = random_talagrand(&mut rng, 2, n, 0.9);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let c = talagrand_to_continuum(&p).unwrap().scaled_to(&q);
        prop_assert!(c.averaging_residual() < 1e-13);
        prop_assert!(c.validate().is_empty());
        prop_assert!(c.normalized().averaging_residual() < 1e-13);
    }
}
