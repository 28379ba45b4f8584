//! Timing of the main numerical kernels on seeded random instances.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use manifold_core::functionals::{eval_b_discrete, LevelChain};
use manifold_core::instances::{random_panchenko, random_psd, random_spherical, random_talagrand};
use manifold_core::kdual::{solve_k, DEFAULT_TOL};
use manifold_core::optimize::{minimize_b, minimize_s, Target};
use manifold_core::rng::stream;
use manifold_core::rpc::{evaluate_recursion, Method, RecursionSpec};

fn bench_solve_k(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_k");
    for n in [4, 16, 64] {
        let mut rng = stream(1, "bench-kd", n as u64);
        let d = random_psd(&mut rng, n, 1.0);
        let u = vec![0.4; n];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_k(black_box(&d), black_box(&u), DEFAULT_TOL).unwrap())
        });
    }
    g.finish();
}

fn bench_functionals(c: &mut Criterion) {
    let mut rng = stream(2, "bench-fn", 0);
    let spec = random_spherical(&mut rng, 8, 1.0, true);
    let tal = random_talagrand(&mut rng, 3, 8, 0.9);
    let pan = random_panchenko(&mut rng, 3, 8);
    let chain = LevelChain::from_panchenko(&pan);
    c.bench_function("b_discrete/n8_r3", |b| {
        b.iter(|| eval_b_discrete(black_box(&spec), black_box(&tal)).unwrap())
    });
    c.bench_function("minimize_b/n8_r3", |b| {
        b.iter(|| minimize_b(black_box(&spec), black_box(&chain), None).unwrap())
    });
}

fn bench_recursion(c: &mut Criterion) {
    let spec = RecursionSpec {
        t: vec![0.3, 0.7],
        z_var: vec![vec![0.2; 2], vec![0.3; 2], vec![0.4; 2]],
    };
    let leaf = |z: &[f64]| {
        let s: f64 = z.iter().sum();
        (1.0 + s * s).ln()
    };
    let mut g = c.benchmark_group("recursion_gh");
    for nodes in [4, 8] {
        g.bench_with_input(BenchmarkId::from_parameter(nodes), &nodes, |b, &nodes| {
            b.iter(|| {
                evaluate_recursion(black_box(&spec), &leaf, Method::GaussHermite { nodes }).unwrap()
            })
        });
    }
    g.finish();
}

fn bench_minimize_s(c: &mut Criterion) {
    let mut rng = stream(3, "bench-s", 0);
    let spec = random_spherical(&mut rng, 4, 1.0, true);
    let mut g = c.benchmark_group("minimize_s");
    g.sample_size(10);
    g.bench_function("n4_r2", |b| {
        b.iter(|| minimize_s(black_box(&spec), &[0.5], Target::B, None).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    bench_solve_k,
    bench_functionals,
    bench_recursion,
    bench_minimize_s
);
criterion_main!(benches);
