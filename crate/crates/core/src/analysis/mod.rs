//! Covariance spectra, attention exports, regularizer trajectories and the
//! attention cost benchmark.

mod bench;
mod cov_descent;
mod spectrum;

pub use bench::{bench_attention, score_entries, write_bench_csv, BenchOptions, CostSample, Mechanism};
pub use cov_descent::{cov_descent, CovDescentOptions, CovDescentStep, DescentRule};
pub use spectrum::{
    effective_rank, entropy, export_snapshot, off_diagonal_mass, snapshot, ArtifactEntry, ArtifactIndex, SnapshotHook,
    SpectrumSnapshot, DEFAULT_RANK_TOL,
};
