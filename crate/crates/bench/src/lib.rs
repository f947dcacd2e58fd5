//! Criterion benchmarks live in `benches/`; the timing table itself is
//! produced by `ssgp bench`.
