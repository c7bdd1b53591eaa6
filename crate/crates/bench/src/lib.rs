//! Criterion benchmarks for cnnsense; see `benches/`.
