use std::f64::consts::PI;

use manifold_core::functionals::{
    a_chain, b_discrete, eval_a_continuum, eval_a_discrete_panchenko, eval_b_continuum,
    eval_b_discrete, eval_p, gamma2_closed_form, reparameterize_beta, w_of_b, y_b_closed_form,
    LevelChain, Route, SphericalModelSpec,
};
use manifold_core::instances::{
    random_euclidean, random_panchenko, random_psd, random_spherical, random_talagrand,
    random_y_profile,
};
use manifold_core::kdual::lambda;
use manifold_core::lattice::{inverse_pd, plus_diag, Mat};
use manifold_core::mixing::MixingFunction;
use manifold_core::optimize::minimize_b;
use manifold_core::profiles::{
    panchenko_to_continuum, talagrand_to_continuum, PanchenkoProfile, TalagrandProfile,
};
use manifold_core::rng::stream;
use manifold_core::rpc::{gamma2_recursion, Method};
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

/// One site, `D = 0`, `h = 0`, one level at `q`: `½[log 2π + log(1−q) + 1/(1−q) + ξ(1) − ξ(q)]`.
fn rs_one_site(xi: &MixingFunction, q: f64) -> f64 {
    0.5 * ((2.0 * PI).ln() + (1.0 - q).ln() + 1.0 / (1.0 - q) + xi.value(1.0) - xi.value(q))
}

#[test]
fn replica_symmetric_one_site_matches_hand_formula() {
    let xi = MixingFunction::new(vec![0.0, 0.0, 1.0]).unwrap();
    let spec = one_site(xi.coeffs.clone());
    for q in [0.0, 0.25, 0.5, 0.8] {
        let p = TalagrandProfile::from_interior(&[], &[vec![q]]).unwrap();
        let disc = eval_b_discrete(&spec, &p).unwrap().value;
        assert!((disc - rs_one_site(&xi, q)).abs() < 1e-12, "q={q}");
        let cont = eval_b_continuum(&spec, &talagrand_to_continuum(&p).unwrap(), 32)
            .unwrap()
            .value;
        assert!((disc - cont).abs() < 1e-10);
    }
    let p = TalagrandProfile::from_interior(&[], &[vec![0.0]]).unwrap();
    assert!(
        (eval_b_discrete(&spec, &p).unwrap().value - 0.5 * ((2.0 * PI).ln() + 2.0)).abs() < 1e-12
    );
}

#[test]
fn zero_mixing_gives_entropy_term() {
    for i in 0..5 {
        let mut rng = stream(5, "func-zero", i);
        let n = rng.random_range(1..=3);
        let d = random_psd(&mut rng, n, 1.0);
        let spec =
            SphericalModelSpec::new(d.clone(), vec![MixingFunction::zero(); n], vec![0.0; n])
                .unwrap();
        let want = 0.5 * ((2.0 * PI).ln() + lambda(&d, &vec![1.0; n]).unwrap());
        let p = TalagrandProfile::from_interior(&[], &vec![vec![0.0]; n]).unwrap();
        assert!((eval_b_discrete(&spec, &p).unwrap().value - want).abs() < 1e-10);
        let a = minimize_b(&spec, &LevelChain::from_talagrand(&p), None).unwrap();
        assert!((a.eval.report.value - want).abs() < 1e-8);
    }
}

#[test]
fn a_one_site_matches_continuum() {
    let spec = one_site(vec![0.0, 0.0, 1.0]);
    let p = TalagrandProfile::from_interior(&[], &[vec![0.6]]).unwrap();
    let c = talagrand_to_continuum(&p).unwrap();
    let a = a_chain(&spec, &LevelChain::from_talagrand(&p), &[2.0])
        .unwrap()
        .report
        .value;
    assert!((a - eval_a_continuum(&spec, &c, &[2.0], 32).unwrap().value).abs() < 1e-8);
}

#[test]
fn derivatives_match_finite_differences() {
    let (mut gs, mut gb, mut hb, mut gp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let h = 1e-6;
    for i in 0..30 {
        let mut rng = stream(5, "func-fd", i);
        let n = rng.random_range(1..=3);
        let r = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let p = random_talagrand(&mut rng, r, n, 0.9);
        let bd = b_discrete(&spec, &p).unwrap();
        for x in 0..n {
            for j in 1..=r {
                let mut pp = p.clone();
                pp.s[x][j] += h;
                let mut pm = p.clone();
                pm.s[x][j] -= h;
                if pp.check().is_err() || pm.check().is_err() {
                    continue;
                }
                let fd = (eval_b_discrete(&spec, &pp).unwrap().value
                    - eval_b_discrete(&spec, &pm).unwrap().value)
                    / (2.0 * h);
                gs = gs.max((fd - bd.grad_s[x][j - 1]).abs());
            }
        }
        let chain = LevelChain::from_talagrand(&p);
        let d0 = &chain.d_sequence(&spec.xi)[0];
        let b: Vec<f64> = (0..n).map(|x| d0[x] + 1.0 + spec.d[(x, x)]).collect();
        let ae = a_chain(&spec, &chain, &b).unwrap();
        for x in 0..n {
            let mut bp = b.clone();
            bp[x] += h;
            let mut bm = b.clone();
            bm[x] -= h;
            let fp = a_chain(&spec, &chain, &bp).unwrap();
            let fm = a_chain(&spec, &chain, &bm).unwrap();
            gb = gb.max(((fp.report.value - fm.report.value) / (2.0 * h) - ae.grad_b[x]).abs());
            for y in 0..n {
                hb = hb.max(((fp.grad_b[y] - fm.grad_b[y]) / (2.0 * h) - ae.hess_b[(x, y)]).abs());
            }
            for j in 0..r {
                let mut cp = chain.clone();
                cp.p[x][j] += h;
                let mut cm = chain.clone();
                cm.p[x][j] -= h;
                let fd = (a_chain(&spec, &cp, &b).unwrap().report.value
                    - a_chain(&spec, &cm, &b).unwrap().report.value)
                    / (2.0 * h);
                gp = gp.max((fd - ae.grad_p[x][j]).abs());
            }
        }
    }
    assert!(gs < 1e-6, "ℬ location gradient {gs}");
    assert!(gb < 1e-6, "𝒜 b-gradient {gb}");
    assert!(hb < 1e-5, "𝒜 b-Hessian {hb}");
    assert!(gp < 1e-6, "𝒜 location gradient {gp}");
}

#[test]
fn panchenko_a_matches_continuum() {
    for i in 0..10 {
        let mut rng = stream(5, "func-panchenko", i);
        let n = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let p = random_panchenko(&mut rng, 2, n);
        let d0 = &LevelChain::from_panchenko(&p).d_sequence(&spec.xi)[0];
        let b: Vec<f64> = (0..n).map(|x| d0[x] + 1.0 + spec.d[(x, x)]).collect();
        let v = eval_a_discrete_panchenko(&spec, &p, &b).unwrap().value;
        let c = panchenko_to_continuum(&p).unwrap();
        assert!((v - eval_a_continuum(&spec, &c, &b, 32).unwrap().value).abs() < 1e-8);
    }
}

#[test]
fn q_star_choice_does_not_change_b() {
    for i in 0..10 {
        let mut rng = stream(5, "func-qstar", i);
        let n = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let c = talagrand_to_continuum(&random_talagrand(&mut rng, 2, n, 0.8)).unwrap();
        let base = eval_b_continuum(&spec, &c, 32).unwrap().value;
        let a = c.last_atom();
        let lifted = eval_b_continuum(&spec, &c.with_q_star(a + 0.7 * (1.0 - a)), 32)
            .unwrap()
            .value;
        assert!((base - lifted).abs() < 1e-10);
    }
}

#[test]
fn y_b_is_quadratic_in_v_with_resolvent_hessian() {
    for i in 0..10 {
        let mut rng = stream(5, "func-yb", i);
        let n = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, false);
        let p = random_panchenko(&mut rng, 2, n);
        let d0 = &LevelChain::from_panchenko(&p).d_sequence(&spec.xi)[0];
        let shift: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|x| d0[x] + shift[x]).collect();
        let g = plus_diag(&spec.d, &shift);
        let want = inverse_pd(&g).unwrap() / n as f64;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let f = |w: &[f64]| y_b_closed_form(&spec, &p, &b, w).unwrap();
        let h = 1e-3;
        for x in 0..n {
            for y in 0..n {
                let at = |dx: f64, dy: f64| {
                    let mut w = v.clone();
                    w[x] += dx;
                    w[y] += dy;
                    f(&w)
                };
                let fd = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
                assert!((fd - want[(x, y)]).abs() < 1e-6, "{fd} vs {}", want[(x, y)]);
            }
        }
    }
}

#[test]
fn w_is_midpoint_convex() {
    for i in 0..20 {
        let mut rng = stream(5, "func-w", i);
        let n = rng.random_range(1..=3);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let p = random_panchenko(&mut rng, 2, n);
        let d0 = &LevelChain::from_panchenko(&p).d_sequence(&spec.xi)[0];
        let pick = |rng: &mut rand_chacha::ChaCha20Rng| -> Vec<f64> {
            (0..n).map(|x| d0[x] + rng.random_range(0.2..3.0)).collect()
        };
        let a = pick(&mut rng);
        let b = pick(&mut rng);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let wm = w_of_b(&spec, &p, &mid).unwrap();
        assert!(
            wm <= 0.5 * (w_of_b(&spec, &p, &a).unwrap() + w_of_b(&spec, &p, &b).unwrap()) + 1e-10
        );
    }
}

#[test]
fn gamma2_two_levels_matches_recursion() {
    let spec = SphericalModelSpec::new(
        Mat::zeros(2, 2),
        vec![
            MixingFunction::new(vec![0.0, 0.2, 0.5]).unwrap(),
            MixingFunction::new(vec![0.0, 0.0, 0.3, 0.4]).unwrap(),
        ],
        vec![0.0, 0.0],
    )
    .unwrap();
    let p = PanchenkoProfile {
        t: vec![0.3, 0.7, 1.0],
        q: vec![vec![0.0, 0.4, 1.0], vec![0.0, 0.6, 1.0]],
    };
    let cf = gamma2_closed_form(&spec, &p).unwrap();
    let rec = gamma2_recursion(&spec, &p, 1, Method::GaussHermite { nodes: 20 }).unwrap();
    assert!(((cf - rec.value) / cf).abs() < 1e-6);
}

#[test]
fn euclidean_routes_agree() {
    for i in 0..10 {
        let mut rng = stream(5, "func-routes", i);
        let spec = random_euclidean(&mut rng, 3, (0.3, 2.0), 1.0);
        let n = spec.lattice.n_sites();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..2.0)).collect();
        let lift = i % 2 == 0;
        let c = random_y_profile(&mut rng, &q, 2, lift);
        let direct = eval_p(&spec, &q, &c, Route::Direct, 32).unwrap().value;
        let mapped = eval_p(&spec, &q, &c, Route::Mapped, 32).unwrap().value;
        assert!((direct - mapped).abs() < 1e-7);
        let unit = eval_p(&reparameterize_beta(&spec), &q, &c, Route::Direct, 32)
            .unwrap()
            .value;
        assert!((direct - unit).abs() < 1e-12 * direct.abs().max(1.0));
        let a = c.last_atom();
        let c2 = c.with_q_star(a + 0.5 * (c.q_t() - a));
        if c2.check().is_ok() {
            assert!(
                (eval_p(&spec, &q, &c2, Route::Direct, 32).unwrap().value - direct).abs() < 1e-10
            );
        }
    }
}

proptest! {
    #[test]
    fn value_is_the_sum_of_terms(seed in 0u64..10_000, n in 1usize..4, r in 1usize..4) {
        let mut rng = stream(seed, "func-prop-terms", 0);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let p = random_talagrand(&mut rng, r, n, 0.9);
        let rep = eval_b_discrete(&spec, &p).unwrap();
        prop_assert!((rep.value - rep.terms.values().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn b_is_invariant_under_site_relabeling(seed in 0u64..10_000, n in 2usize..4, r in 1usize..4) {
        let mut rng = stream(seed, "func-prop-perm", 0);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let p = random_talagrand(&mut rng, r, n, 0.9);
        let perm: Vec<usize> = (0..n).rev().collect();
        let d = Mat::from_fn(n, n, |x, y| spec.d[(perm[x], perm[y])]);
        let xi = perm.iter().map(|&x| spec.xi[x].clone()).collect();
        let h = perm.iter().map(|&x| spec.h[x]).collect();
        let spec2 = SphericalModelSpec::new(d, xi, h).unwrap();
        let p2 = TalagrandProfile { m: p.m.clone(), s: perm.iter().map(|&x| p.s[x].clone()).collect() };
        let a = eval_b_discrete(&spec, &p).unwrap().value;
        let b = eval_b_discrete(&spec2, &p2).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn a_dominates_b_at_every_b(seed in 0u64..10_000, n in 1usize..4, r in 1usize..3) {
        let mut rng = stream(seed, "func-prop-ab", 0);
        let spec = random_spherical(&mut rng, n, 1.0, true);
        let p = random_talagrand(&mut rng, r, n, 0.9);
        let chain = LevelChain::from_talagrand(&p);
        let best = minimize_b(&spec, &chain, None).unwrap();
        let b: Vec<f64> = best.b.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
        prop_assert!(a_chain(&spec, &chain, &b).unwrap().report.value >= best.eval.report.value - 1e-12);
    }
}
