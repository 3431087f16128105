//! Hierarchical targets `βF + αG(F)`, their complexity measures, the parity
//! hard instances and dataset generation.

mod data;
mod net;
mod target;
mod taylor;

pub use data::{
    cube_vertex, register_sampler, sample_dataset, DataSpec, Dataset, Tail, TailSampler, MAX_ENUMERATION_DIM,
};
pub use net::{lipschitz_bound, NetForm, SmoothUnit, TwoLayerSmoothNet};
pub use target::{benchmark_instance, min_complexity_instance, parity_instance, Scaling, TargetFunction};
pub use taylor::{complexity_eps, complexity_s, SmoothActivation, TaylorSeries, C_STAR};
