//! Fixed-feature, tangent-kernel and kernel-regression baselines.

pub mod fc;
pub mod kernel;
pub mod ntk;

pub use fc::{FcForward, FcInit, FullyConnectedNet, LinearizedNet};
pub use kernel::{
    kernel_gram, kernel_predict, kernel_regress, KernelPredictor, KernelSpec, RegressOptions, Regularizer,
};
pub use ntk::{ntk_features, tangent_kernel, TangentFeatures};
