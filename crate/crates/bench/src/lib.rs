//! Benchmarks for the autodiff engine, the sequence models and training.
//! See `benches/engine.rs`.
