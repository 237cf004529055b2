use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::numeric::Matrix;

/// Floor applied to a channel's standard deviation.
pub const STD_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-channel mean and population standard deviation of `train`.
pub fn zscore_fit(train: &TimeSeriesDataset) -> ZScoreStats {
    let n = train.len() as f64;
    let mut mean = Vec::with_capacity(train.channels());
    let mut std = Vec::with_capacity(train.channels());
    for c in 0..train.channels() {
        let row = train.values.row(c);
        let m = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt().max(STD_GUARD));
    }
    ZScoreStats { mean, std }
}

pub fn zscore_apply(ds: &TimeSeriesDataset, stats: &ZScoreStats) -> TimeSeriesDataset {
    let values = Matrix::from_fn(ds.channels(), ds.len(), |c, t| {
        (ds.values[(c, t)] - stats.mean[c]) / stats.std[c]
    });
    TimeSeriesDataset { values, ..ds.clone() }
}

pub fn zscore_invert(ds: &TimeSeriesDataset, stats: &ZScoreStats) -> TimeSeriesDataset {
    let values = Matrix::from_fn(ds.channels(), ds.len(), |c, t| {
        ds.values[(c, t)] * stats.std[c] + stats.mean[c]
    });
    TimeSeriesDataset { values, ..ds.clone() }
}
