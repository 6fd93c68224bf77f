//! Benchmarks for otlab-core; see `benches/`.
