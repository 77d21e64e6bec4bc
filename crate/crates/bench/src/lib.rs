//! Criterion benchmarks for the propagation and decomposition kernels; see `benches/`.
