//! Optimization: Adam, the epoch loop with patience-based early stopping,
//! and the MSE/MAE metrics.

mod adam;
mod early_stop;
mod forecaster;
mod metrics;
mod trainer;

pub use adam::{adam_step, global_norm, AdamConfig, OptimizerState, StepInfo};
pub use early_stop::{EarlyStopper, StopDecision};
pub use forecaster::{batch_gradient, record_objective, Forecaster, Recorded, SampleObjective};
pub use metrics::{evaluate, mae, mse, Metrics};
pub use trainer::{lr_for_dataset, train, EpochRecord, NoHook, TrainConfig, TrainHook, TrainReport};
