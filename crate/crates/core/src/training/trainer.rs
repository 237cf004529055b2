use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::SpectrumSnapshot;
use crate::data::Window;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::model::dataset_defaults;
use crate::rng::SeededRng;
use crate::training::{
    adam_step, batch_gradient, evaluate, AdamConfig, EarlyStopper, Forecaster, Metrics, OptimizerState, StopDecision,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// `None` trains for exactly `max_epochs`.
    pub patience: Option<usize>,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
    /// Estimated per-batch memory ceiling; the batch is halved (down to 1)
    /// until the estimate fits.
    pub memory_budget_bytes: Option<u64>,
    /// Wall-clock timings make reports non-reproducible, so they are opt-in.
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: Some(5),
            clip_norm: None,
            seed: 0,
            exec: ExecMode::Parallel,
            memory_budget_bytes: Some(4 << 30),
            record_timing: false,
        }
    }
}

/// Learning rate for a named dataset, falling back to `1e-3`.
pub fn lr_for_dataset(name: Option<&str>) -> f64 {
    name.and_then(dataset_defaults).map_or(1e-3, |d| d.lr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: Option<f64>,
    pub wall_time_per_batch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub early_stopped: bool,
    pub test: Option<Metrics>,
    pub effective_batch_size: usize,
    pub batch_halvings: usize,
    pub snapshots: Vec<SpectrumSnapshot>,
}

impl TrainReport {
    pub fn val_history(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.val_mse).collect()
    }

    /// One JSON record per epoch.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for rec in &self.epochs {
            let line = serde_json::to_string(rec)?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Called before training (epoch 0) and after every epoch.
pub trait TrainHook<M: ?Sized> {
    fn on_epoch(&mut self, epoch: usize, model: &M) -> Result<Vec<SpectrumSnapshot>>;
}

pub struct NoHook;

impl<M: ?Sized> TrainHook<M> for NoHook {
    fn on_epoch(&mut self, _: usize, _: &M) -> Result<Vec<SpectrumSnapshot>> {
        Ok(Vec::new())
    }
}

fn fit_batch_size(requested: usize, per_sample_bytes: u64, budget: Option<u64>) -> (usize, usize) {
    let mut batch = requested.max(1);
    let mut halvings = 0;
    if let Some(budget) = budget {
        while batch > 1 && batch as u64 * per_sample_bytes > budget {
            batch /= 2;
            halvings += 1;
        }
    }
    (batch, halvings)
}

/// Non-finite intermediates during training mean the parameters blew up.
fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { context } => Error::Diverged {
            epoch,
            detail: format!("non-finite {context}"),
        },
        other => other,
    }
}

/// Trains `model` on `train`, early-stopping on `val` when it is non-empty
/// and `patience` is set, restores the best-validation parameters and
/// evaluates on `test`.
pub fn train<M: Forecaster>(
    model: &mut M,
    train: &[Window],
    val: &[Window],
    test: &[Window],
    cfg: &TrainConfig,
    hook: &mut dyn TrainHook<M>,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let per_sample =
        8 * 4 * model.params().element_count() as u64 + 8 * 4 * (train[0].input.len() + train[0].target.len()) as u64;
    let (batch_size, halvings) = fit_batch_size(cfg.batch_size, per_sample, cfg.memory_budget_bytes);
    if halvings > 0 {
        log::warn!("batch size halved {halvings} time(s) to {batch_size} to fit the memory budget");
    }

    let mut rng = SeededRng::with_stream(cfg.seed, 0x5348_5546);
    let mut state = OptimizerState::new(AdamConfig {
        lr: cfg.lr,
        clip_norm: cfg.clip_norm,
        ..Default::default()
    });
    let update_set = model.update_set();
    let mut snapshots = hook.on_epoch(0, model)?;
    let mut best_params = model.params().clone();
    let mut stopper = match (cfg.patience, val.is_empty()) {
        (Some(p), false) => Some(EarlyStopper::new(p)),
        _ => None,
    };
    let mut epochs = Vec::new();
    let mut best_epoch = 0;
    let mut early_stopped = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let started = Instant::now();
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradient(model, model.params(), &batch, cfg.exec).map_err(diverged(epoch))?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss became {loss} at batch {batches}"),
                });
            }
            adam_step(model.params_mut(), &grads, &update_set, &mut state).map_err(diverged(epoch))?;
            total += loss * batch.len() as f64;
            batches += 1;
        }
        let elapsed = started.elapsed().as_secs_f64();
        let val_mse = if val.is_empty() {
            None
        } else {
            Some(evaluate(model, val, cfg.exec).map_err(diverged(epoch))?.mse)
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_mse,
            wall_time_per_batch: cfg.record_timing.then(|| elapsed / batches as f64),
        });
        snapshots.extend(hook.on_epoch(epoch, model)?);

        match (&mut stopper, val_mse) {
            (Some(s), Some(v)) => match s.observe(v) {
                StopDecision::Improved => {
                    best_params.clone_from(model.params());
                    best_epoch = epoch;
                }
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    early_stopped = true;
                    break;
                }
            },
            _ => {
                best_params.clone_from(model.params());
                best_epoch = epoch;
            }
        }
    }

    let stopped_epoch = epochs.len();
    model.params_mut().copy_values_from(&best_params)?;
    let test = if test.is_empty() {
        None
    } else {
        Some(evaluate(model, test, cfg.exec)?)
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        stopped_epoch,
        early_stopped,
        test,
        effective_batch_size: batch_size,
        batch_halvings: halvings,
        snapshots,
    })
}
