//! Criterion benchmarks for the absorber toolkit; see `benches/`.
