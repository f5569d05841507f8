//! Wasserstein-regularized conformal prediction: distribution distances,
//! density estimation, a small MLP regressor, conformal calibration, the
//! regularized training loop and synthetic multi-source data.

pub mod conformal;
pub mod datagen;
pub mod density;
pub mod dist;
pub mod error;
pub mod model;
pub mod train;

pub use error::{Error, Result};
