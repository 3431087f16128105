//! Exact Boolean Fourier analysis on the cube and the separation experiments
//! that measure how far kernel and fixed-feature predictors stay from a
//! hidden parity.

pub mod census;
pub mod fourier;
pub mod separation;

pub use census::offdiag_energy_census;
pub use fourier::{naive_walsh_hadamard, parseval_decomposition, CubeFunction, FourierSpectrum, ParsevalDecomposition};
pub use separation::{
    feature_map_separation_experiment, kernel_separation_experiment, subset_masks, Anchors, FeatureMap, LabelPart,
    ReportParams, SeparationReport, SeparationSetup, MAX_EXPERIMENT_DIM,
};
