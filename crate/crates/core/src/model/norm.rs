use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Added to the look-back variance before the square root.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-channel standardization over the look-back window:
/// `x̃ = (x - mean) / sqrt(var + NORM_EPS)`.
pub fn instance_normalize(x: &Matrix) -> (Matrix, InstanceStats) {
    let t = x.cols() as f64;
    let mut mean = Vec::with_capacity(x.rows());
    let mut std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let m = row.iter().sum::<f64>() / t;
        let v = row.iter().map(|e| (e - m).powi(2)).sum::<f64>() / t;
        mean.push(m);
        std.push((v + NORM_EPS).sqrt());
    }
    let out = Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - mean[i]) / std[i]);
    (out, InstanceStats { mean, std })
}

pub fn denormalize(y: &Matrix, stats: &InstanceStats) -> Result<Matrix> {
    if y.rows() != stats.mean.len() {
        return Err(Error::shape(
            "denormalize",
            format!("{} rows for {} channels", y.rows(), stats.mean.len()),
        ));
    }
    Ok(Matrix::from_fn(y.rows(), y.cols(), |i, j| {
        y[(i, j)] * stats.std[i] + stats.mean[i]
    }))
}
