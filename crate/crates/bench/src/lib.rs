//! Criterion benchmarks for `manifold-core`; see `benches/kernels.rs`.
