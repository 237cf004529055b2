//! Hierarchical latent-query forecasting (U-Cast) with full-rank covariance
//! regularization, plus a VAR(1) laboratory with closed-form Bayes-risk
//! oracles.
//!
//! Module map:
//!
//! - [`numeric`]: dense matrices, stable primitives, a reverse-mode tape and
//!   a finite-difference gradient checker.
//! - [`var_lab`]: VAR(1) generation, stationary covariance, Bayes risks and
//!   the CI-vs-CD linear experiment.
//! - [`model`]: the U-Cast architecture, its objective and ablation variants.
//! - [`training`]: Adam, the training loop with early stopping, metrics.
//! - [`data`]: CSV ingestion, sliding windows, splits and z-scoring.
//! - [`pipeline`]: data sources and the split / z-score / window chain.
//! - [`analysis`]: spectra, effective rank, entropy and the attention cost
//!   benchmark.
//!
//! Data-parallel loops (per-sample gradients, Monte-Carlo draws, experiment
//! cells) go through [`exec`], which uses rayon when the `parallel` feature
//! is enabled and runs sequentially otherwise.

pub mod analysis;
pub mod data;
pub mod error;
pub mod exec;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod training;
pub mod var_lab;

pub use error::{Error, Result};
pub use numeric::Matrix;
