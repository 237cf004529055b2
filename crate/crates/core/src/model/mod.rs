//! The hierarchical latent-query forecaster and its covariance regularizer.

mod checkpoint;
mod config;
mod cov;
mod forward;
mod norm;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry};
pub use config::{
    dataset_defaults, dataset_prediction_length, ladder_sizes, ladder_sizes_checked, DatasetDefaults, UCastConfig,
    Variant,
};
pub use cov::{cov_loss, cov_loss_with_grad, covariance, record_cov_loss};
pub use forward::{total_loss, ForwardTrace, UCastModel};
pub use norm::{denormalize, instance_normalize, InstanceStats, NORM_EPS};
