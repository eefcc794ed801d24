//! Criterion benchmarks for the codec, feature and quality hot paths live in `benches/`.
