//! Time-series ingestion: CSV files, sliding windows, chronological splits
//! and channel-wise z-scoring.
//!
//! In memory a series is channel-major (`C x N`); on disk rows are time
//! steps and columns are channels.

mod csv_io;
mod dataset;
mod split;
mod windows;
mod zscore;

pub use csv_io::{load_csv, save_csv, LoadOptions, LoadOutcome};
pub use dataset::{DatasetManifest, TimeSeriesDataset};
pub use split::{split_chronological, Segments};
pub use windows::{sliding_windows, window_count, Window};
pub use zscore::{zscore_apply, zscore_fit, zscore_invert, ZScoreStats};
