//! Criterion benchmarks for `netsym`; see `benches/`.
