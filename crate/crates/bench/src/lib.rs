//! Benchmarks for the composition and session engine; see `benches/engine.rs`.
