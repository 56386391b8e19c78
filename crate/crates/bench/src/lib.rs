//! Criterion benchmarks for the motion pipeline live in `benches/`.
