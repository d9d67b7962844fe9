//! Benchmark-only crate; see `benches/kernels.rs`. The hot paths measured
//! here are the per-step Langevin update, full Gibbs batch draws, the
//! projected-subgradient inner solver, the two-point gradient combiner, and
//! domain projections.
