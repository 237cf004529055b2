//! Dense linear algebra and the gradient machinery used for training.

pub mod eigen;
pub mod gradcheck;
pub mod linalg;
mod matrix;
mod params;
mod tape;

pub use matrix::Matrix;
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
