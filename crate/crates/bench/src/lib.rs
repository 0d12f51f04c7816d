//! Criterion benchmarks for the hot paths of `feedtrans-core`; see
//! `benches/hot_paths.rs`. Run with `cargo bench -p feedtrans-bench`.
