//! Seeded random instances for the verification suite and property tests.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::functionals::{EuclideanModelSpec, SphericalModelSpec};
use crate::lattice::{LatticeSpec, Mat};
use crate::mixing::{CorrelationFunction, MixingFunction};
use crate::profiles::{
    talagrand_to_continuum, ContinuumProfile, PanchenkoProfile, TalagrandProfile,
};

/// Random positive semi-definite `n × n` matrix `AAᵀ·scale/n` with Gaussian `A`.
pub fn random_psd(rng: &mut ChaCha20Rng, n: usize, scale: f64) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let m: Mat = &a * a.transpose() * (scale / n as f64);
    (&m + m.transpose()) * 0.5
}

/// Random mixing function of degree ≤ `deg` with `ξ′(0), ξ″(0) > 0` and `ξ(1) ≈ scale`.
pub fn random_mixing(rng: &mut ChaCha20Rng, deg: usize, scale: f64) -> MixingFunction {
    let mut c: Vec<f64> = (0..=deg.max(2))
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    c[0] = rng.random_range(0.0..0.5);
    let s: f64 = c.iter().sum();
    MixingFunction {
        coeffs: c.iter().map(|v| v * scale / s).collect(),
    }
}

/// Sorted uniform draws in `(lo, hi)`.
pub fn sorted_uniform(rng: &mut ChaCha20Rng, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Random Talagrand profile with locations in `[0, smax]`.
pub fn random_talagrand(rng: &mut ChaCha20Rng, r: usize, n: usize, smax: f64) -> TalagrandProfile {
    let mut m = sorted_uniform(rng, r - 1, 0.05, 0.95);
    m.dedup();
    while m.len() < r - 1 {
        m = sorted_uniform(rng, r - 1, 0.05, 0.95);
        m.dedup();
    }
    let s: Vec<Vec<f64>> = (0..n).map(|_| sorted_uniform(rng, r, 0.0, smax)).collect();
    TalagrandProfile::from_interior(&m, &s).expect("valid random profile")
}

/// Random Panchenko profile.
pub fn random_panchenko(rng: &mut ChaCha20Rng, r: usize, n: usize) -> PanchenkoProfile {
    let mut t = sorted_uniform(rng, r, 0.05, 0.95);
    t.push(1.0);
    let q = (0..n)
        .map(|_| {
            let mut row = vec![0.0];
            row.extend(sorted_uniform(rng, r - 1, 0.0, 1.0));
            row.push(1.0);
            row
        })
        .collect();
    PanchenkoProfile { t, q }
}

/// Random spherical model with PSD coupling, generic mixing and optional field.
pub fn random_spherical(
    rng: &mut ChaCha20Rng,
    n: usize,
    xi_scale: f64,
    field: bool,
) -> SphericalModelSpec {
    let scale = rng.random_range(0.2..1.5);
    let d = random_psd(rng, n, scale);
    let xi = (0..n).map(|_| random_mixing(rng, 3, xi_scale)).collect();
    let h = (0..n)
        .map(|_| {
            if field {
                rng.random_range(-0.5..0.5)
            } else {
                0.0
            }
        })
        .collect();
    SphericalModelSpec::new(d, xi, h).expect("valid random model")
}

/// Random correlation function with `B(0) ≤ b0_max`.
pub fn random_correlation(rng: &mut ChaCha20Rng, atoms: usize, b0_max: f64) -> CorrelationFunction {
    let mut w: Vec<f64> = (0..=atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let b0 = rng.random_range(0.3..1.0) * b0_max;
    for v in &mut w {
        *v *= b0 / total;
    }
    let c0 = w.pop().unwrap_or(0.0) * rng.random_range(0.0..1.0);
    CorrelationFunction {
        c0,
        atoms: w
            .into_iter()
            .map(|wi| (wi, rng.random_range(0.3..1.5)))
            .collect(),
    }
}

/// Random one-dimensional ring model with `L ≤ l_max` and `β` in the given range.
pub fn random_euclidean(
    rng: &mut ChaCha20Rng,
    l_max: usize,
    beta: (f64, f64),
    b0_max: f64,
) -> EuclideanModelSpec {
    EuclideanModelSpec {
        lattice: LatticeSpec {
            l: rng.random_range(1..=l_max),
            d: 1,
            mu: rng.random_range(0.5..2.0),
            t: rng.random_range(0.1..1.0),
        },
        b: random_correlation(rng, 2, b0_max),
        h: rng.random_range(-0.5..0.5),
        beta: rng.random_range(beta.0..beta.1),
    }
}

/// Random profile in `𝒴(q)`: a scaled Talagrand profile, with `q_*` optionally raised above the last atom.
pub fn random_y_profile(
    rng: &mut ChaCha20Rng,
    q: &[f64],
    r: usize,
    lift_q_star: bool,
) -> ContinuumProfile {
    let p = random_talagrand(rng, r, q.len(), 0.9);
    let c = talagrand_to_continuum(&p).expect("valid random profile");
    let c = if lift_q_star {
        let a = c.last_atom();
        c.with_q_star(a + rng.random_range(0.1..0.6) * (1.0 - a))
    } else {
        c
    };
    c.scaled_to(q)
}
