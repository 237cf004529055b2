use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Contiguous train / validation / test segments in time order.
#[derive(Debug, Clone)]
pub struct Segments {
    pub train: TimeSeriesDataset,
    pub val: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    /// Column boundaries `[0, a, b, N]`.
    pub boundaries: [usize; 4],
}

impl Segments {
    pub fn sizes(&self) -> [usize; 3] {
        let b = self.boundaries;
        [b[1] - b[0], b[2] - b[1], b[3] - b[2]]
    }
}

/// Splits `ds` by `ratios` (train, val, test). Each segment with a positive
/// ratio must hold at least `min_len` steps so it can be windowed; a zero
/// ratio gives an empty segment.
pub fn split_chronological(ds: &TimeSeriesDataset, ratios: [f64; 3], min_len: usize) -> Result<Segments> {
    if ratios.iter().any(|r| r.is_nan() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    if ratios[0] <= 0.0 {
        return Err(Error::Parameter("train ratio must be positive".into()));
    }
    let n = ds.len();
    // Small slack absorbs products like 0.7 * 10 = 6.999...
    let n_train = ((n as f64 * ratios[0]) + 1e-9).floor() as usize;
    let n_val = ((n as f64 * ratios[1]) + 1e-9).floor() as usize;
    let n_val = if ratios[2] > 0.0 { n_val } else { n - n_train };
    let bounds = [0, n_train, n_train + n_val, n];
    for (k, name) in ["train", "validation", "test"].iter().enumerate() {
        let len = bounds[k + 1] - bounds[k];
        if ratios[k] > 0.0 && len < min_len {
            return Err(Error::Data(format!(
                "{name} segment has {len} steps, need at least {min_len} to window"
            )));
        }
    }
    Ok(Segments {
        train: ds.slice(bounds[0], bounds[1])?,
        val: ds.slice(bounds[1], bounds[2])?,
        test: ds.slice(bounds[2], bounds[3])?,
        boundaries: bounds,
    })
}
