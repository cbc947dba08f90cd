//! Benchmark-only crate; see `benches/hot_paths.rs` for the criterion
//! benchmarks covering convolution, FID statistics, and training iterations.
