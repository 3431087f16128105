//! Residual networks learning hierarchical targets `βF + αG(F)`, the kernel
//! and fixed-feature baselines they are compared against, the parity lower
//! bound machinery and the Hermite indicator construction.

pub mod baselines;
pub mod concept;
pub mod error;
pub mod hermite;
pub mod linalg;
pub mod lowerbound;
pub mod resnet;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
pub use rng::RngStream;
