use crate::data::Window;
use crate::error::Result;
use crate::exec::{self, ExecMode};
use crate::numeric::{Gradients, Matrix, ParamId, ParamSet, Tape, Var};

/// What a model records on a tape for one input window.
#[derive(Debug, Clone, Copy)]
pub struct Recorded {
    /// Prediction in the scale of the targets.
    pub prediction: Var,
    /// Additional objective term (already weighted), if any.
    pub regularizer: Option<Var>,
}

/// A trainable model over `C x T` input windows.
pub trait Forecaster: Sync {
    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// Blocks the optimizer may update.
    fn update_set(&self) -> Vec<ParamId> {
        self.params().ids().collect()
    }

    /// Records the forward pass with the given parameter values.
    fn record(&self, params: &ParamSet, tape: &mut Tape, input: &Matrix) -> Result<Recorded>;

    fn predict(&self, params: &ParamSet, input: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let r = self.record(params, &mut tape, input)?;
        Ok(tape.value(r.prediction).clone())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SampleObjective {
    pub loss: Var,
    pub mse: Var,
    pub recorded: Recorded,
}

/// `mean((Ŷ - Y)²) + regularizer` for one window.
pub fn record_objective<M: Forecaster + ?Sized>(
    model: &M,
    params: &ParamSet,
    tape: &mut Tape,
    input: &Matrix,
    target: &Matrix,
) -> Result<SampleObjective> {
    let recorded = model.record(params, tape, input)?;
    let y = tape.constant(target.clone());
    let diff = tape.sub(recorded.prediction, y)?;
    let sq = tape.square(diff);
    let mse = tape.mean(sq);
    let loss = match recorded.regularizer {
        Some(r) => tape.add(mse, r)?,
        None => mse,
    };
    Ok(SampleObjective { loss, mse, recorded })
}

/// Mean objective and mean gradient over `batch`. Per-sample work may run in
/// parallel; the reduction is sequential in batch order.
pub fn batch_gradient<M: Forecaster + ?Sized>(
    model: &M,
    params: &ParamSet,
    batch: &[&Window],
    mode: ExecMode,
) -> Result<(f64, Gradients)> {
    let per_sample = exec::map(mode, batch, |w| -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let obj = record_objective(model, params, &mut tape, &w.input, &w.target)?;
        Ok((tape.scalar(obj.loss), tape.backward(obj.loss)?))
    });
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut acc: Vec<Option<Matrix>> = vec![None; params.len()];
    for item in per_sample {
        let (l, g) = item?;
        loss += l;
        for (id, block) in g.iter() {
            match &mut acc[id.0] {
                Some(a) => a.add_assign(block)?,
                slot => *slot = Some(block.clone()),
            }
        }
    }
    for block in acc.iter_mut().flatten() {
        *block = block.scale(1.0 / n);
    }
    Ok((loss / n, Gradients::from_blocks(acc)))
}
