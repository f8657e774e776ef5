//! Criterion benchmarks for the soft machine; see `benches/`.
