//! Benchmark-only crate; see `benches/conv_kernels.rs`.
