//! Criterion benchmarks for the simulation and density kernels; see `benches/`.
