//! Criterion benchmarks for `zeno-core`; see `benches/`.
