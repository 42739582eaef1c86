//! Criterion benchmarks for the narrowgap kernels; see `benches/`.
