//! Central finite-difference verification of tape gradients.

use serde::Serialize;

use crate::error::Result;
use crate::numeric::{Gradients, Matrix, ParamId, ParamSet, Tape, Var};

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub name: String,
    /// `max |analytic - numeric|` divided by the block's largest gradient
    /// magnitude; absolute when both gradients are below `1e-8`.
    pub worst_rel_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| !b.flagged)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.worst_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| b.flagged)
    }
}

/// Relative error between an analytic and a numeric gradient block.
pub fn block_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let diff = analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic.max_abs().max(numeric.max_abs());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `loss` with respect to every entry of block `id`.
pub fn numeric_gradient(
    params: &ParamSet,
    id: ParamId,
    step: f64,
    loss: &impl Fn(&ParamSet) -> Result<f64>,
) -> Result<Matrix> {
    let mut work = params.clone();
    let shape = params.get(id).shape();
    let mut out = Matrix::zeros(shape.0, shape.1);
    for k in 0..out.len() {
        let orig = work.get(id).as_slice()[k];
        work.get_mut(id).as_mut_slice()[k] = orig + step;
        let up = loss(&work)?;
        work.get_mut(id).as_mut_slice()[k] = orig - step;
        let down = loss(&work)?;
        work.get_mut(id).as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// Compares given analytic gradients against central differences.
pub fn compare_gradients(
    params: &ParamSet,
    blocks: &[ParamId],
    analytic: &Gradients,
    step: f64,
    tol: f64,
    loss: impl Fn(&ParamSet) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut reports = Vec::with_capacity(blocks.len());
    for &id in blocks {
        let numeric = numeric_gradient(params, id, step, &loss)?;
        let err = block_error(analytic.get(id)?, &numeric);
        reports.push(BlockReport {
            name: params.name(id).to_string(),
            worst_rel_error: err,
            flagged: err.is_nan() || err >= tol,
        });
    }
    Ok(GradCheckReport { tol, blocks: reports })
}

/// Records the objective with `record`, differentiates it on the tape and
/// checks every block in `blocks` by central differences.
pub fn grad_check(
    params: &ParamSet,
    blocks: &[ParamId],
    step: f64,
    tol: f64,
    record: impl Fn(&ParamSet, &mut Tape) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let loss = record(params, &mut tape)?;
    let analytic = tape.backward(loss)?;
    compare_gradients(params, blocks, &analytic, step, tol, |p| {
        let mut t = Tape::new();
        let l = record(p, &mut t)?;
        Ok(t.scalar(l))
    })
}
