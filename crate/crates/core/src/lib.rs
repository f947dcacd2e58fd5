pub mod dataset;
pub mod engine;
pub mod error;
pub mod exact;
pub mod kalman;
pub mod kernels;
mod optim;
pub mod quad;
pub mod residual;
pub mod spectral;
pub mod ssm;
pub mod timing;

pub use error::{Error, Result};
