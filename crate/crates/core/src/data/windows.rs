use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// One supervised sample: `input` is `C x T`, `target` the following `S`
/// steps (`C x S`).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Matrix,
    pub target: Matrix,
    /// Column of the first input step in the source series.
    pub start: usize,
}

pub fn window_count(n: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if n < lookback + horizon || stride == 0 {
        0
    } else {
        (n - lookback - horizon) / stride + 1
    }
}

/// Windows at offsets `0, stride, 2·stride, ...` that fit entirely inside
/// `ds`.
pub fn sliding_windows(ds: &TimeSeriesDataset, lookback: usize, horizon: usize, stride: usize) -> Result<Vec<Window>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Parameter(format!(
            "lookback, horizon and stride must be >= 1 (got {lookback}, {horizon}, {stride})"
        )));
    }
    let n = ds.len();
    if n < lookback + horizon {
        return Err(Error::Data(format!(
            "series of length {n} is shorter than lookback + horizon = {}",
            lookback + horizon
        )));
    }
    let c = ds.channels();
    let v = &ds.values;
    Ok((0..window_count(n, lookback, horizon, stride))
        .map(|k| {
            let s = k * stride;
            Window {
                input: Matrix::from_fn(c, lookback, |i, j| v[(i, s + j)]),
                target: Matrix::from_fn(c, horizon, |i, j| v[(i, s + lookback + j)]),
                start: s,
            }
        })
        .collect())
}
