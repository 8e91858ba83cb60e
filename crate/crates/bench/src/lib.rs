//! Criterion benchmarks for the analysis, condensation and synthesis
//! pipeline; run with `cargo bench -p phstab-bench`.
