use serde::{Deserialize, Serialize};

use crate::data::Window;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::numeric::Matrix;
use crate::training::Forecaster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    Ok(pred.sub(target)?.as_slice().iter().map(|e| e * e).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &Matrix, target: &Matrix) -> Result<f64> {
    Ok(pred.sub(target)?.as_slice().iter().map(|e| e.abs()).sum::<f64>() / pred.len() as f64)
}

/// MSE and MAE averaged over samples, horizon steps and channels.
pub fn evaluate<M: Forecaster + ?Sized>(model: &M, windows: &[Window], mode: ExecMode) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let sums = exec::map(mode, windows, |w| -> Result<(f64, f64, usize)> {
        let pred = model.predict(model.params(), &w.input)?;
        let diff = pred.sub(&w.target)?;
        let sq = diff.as_slice().iter().map(|e| e * e).sum();
        let ab = diff.as_slice().iter().map(|e| e.abs()).sum();
        Ok((sq, ab, diff.len()))
    });
    let (mut sq, mut ab, mut n) = (0.0, 0.0, 0usize);
    for s in sums {
        let (a, b, c) = s?;
        sq += a;
        ab += b;
        n += c;
    }
    Ok(Metrics {
        mse: sq / n as f64,
        mae: ab / n as f64,
    })
}
