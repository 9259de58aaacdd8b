//! Criterion benchmarks for the decoders and the scoring network; see `benches/`.
