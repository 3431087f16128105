use serde::{Deserialize, Serialize};

use super::model::{affine_parts, ResNetModel};
use crate::error::Result;

/// Activation-pattern drift from initialization and the size of the learned weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// Rows where `sign((W0+W)(x,1)) ≠ sign(W0(x,1))`.
    pub flips1: usize,
    /// Rows where `sign((V0+V)(out1,1)) ≠ sign(V0(out1,1))` at the current `out1`.
    pub flips2: usize,
    pub frob_w: f64,
    pub frob_v: f64,
    pub spectral_w: f64,
    pub spectral_v: f64,
    pub tau_w_violated: bool,
    pub tau_v_violated: bool,
}

fn count_flips(base: &[f64], moved: &[f64]) -> usize {
    base.iter()
        .zip(moved)
        .filter(|(b, m)| (**b >= 0.0) != (**m >= 0.0))
        .count()
}

pub fn coupling_diagnostics(model: &ResNetModel, x: &[f64]) -> Result<CouplingReport> {
    let fwd = model.forward(x)?;
    let base1 = affine_parts(&model.w0, None, x);
    let base2 = affine_parts(&model.v0, None, &fwd.out1);
    let spectral_w = model.w.spectral_norm();
    let spectral_v = model.v.spectral_norm();
    Ok(CouplingReport {
        flips1: count_flips(&base1, &fwd.h1),
        flips2: count_flips(&base2, &fwd.h2),
        frob_w: model.w.frobenius_norm(),
        frob_v: model.v.frobenius_norm(),
        spectral_w,
        spectral_v,
        tau_w_violated: spectral_w > model.tau_w,
        tau_v_violated: spectral_v > model.tau_v,
    })
}
