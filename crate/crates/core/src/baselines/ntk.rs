use super::fc::FullyConnectedNet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::resnet::{ResNetModel, Trainable, TrainableSet};

/// Networks whose per-output parameter gradients can serve as kernel features.
pub trait TangentFeatures {
    fn feature_input_dim(&self) -> usize;

    /// `∂out_r(x)/∂θ` for each output `r`, restricted to the groups trained
    /// under `set` and flattened in group order.
    fn tangent_features(&self, x: &[f64], set: TrainableSet) -> Vec<Vec<f64>>;
}

fn flatten(grads: &[Matrix], keep: &[bool]) -> Vec<f64> {
    grads
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .flat_map(|(g, _)| g.as_slice().iter().copied())
        .collect()
}

fn zero_buffers<T: Trainable>(net: &T) -> Vec<Matrix> {
    net.param_groups()
        .iter()
        .map(|g| Matrix::zeros(g.rows, g.cols))
        .collect()
}

fn kept<T: Trainable>(net: &T, set: TrainableSet) -> Vec<bool> {
    net.param_groups().iter().map(|g| g.trained_under(set)).collect()
}

impl TangentFeatures for FullyConnectedNet {
    fn feature_input_dim(&self) -> usize {
        self.d
    }

    fn tangent_features(&self, x: &[f64], set: TrainableSet) -> Vec<Vec<f64>> {
        let fwd = self.forward_unchecked(x);
        let keep = kept(self, set);
        (0..self.k)
            .map(|r| {
                let mut e = vec![0.0; self.k];
                e[r] = 1.0;
                let mut grads = zero_buffers(self);
                self.backprop_into(x, &fwd, &e, 1.0, &mut grads);
                flatten(&grads, &keep)
            })
            .collect()
    }
}

impl TangentFeatures for ResNetModel {
    fn feature_input_dim(&self) -> usize {
        self.d
    }

    fn tangent_features(&self, x: &[f64], set: TrainableSet) -> Vec<Vec<f64>> {
        let fwd = self.forward_unchecked(x);
        let keep = kept(self, set);
        (0..self.k)
            .map(|r| {
                let mut e = vec![0.0; self.k];
                e[r] = 1.0;
                let mut grads = zero_buffers(self);
                if let [gw, gv, ga] = grads.as_mut_slice() {
                    self.backprop_parts(x, &fwd, &e, 1.0, gw, gv, ga);
                }
                flatten(&grads, &keep)
            })
            .collect()
    }
}

/// Per-output tangent features of `net` at `x`.
pub fn ntk_features<N: TangentFeatures + ?Sized>(net: &N, x: &[f64], set: TrainableSet) -> Result<Vec<Vec<f64>>> {
    if x.len() != net.feature_input_dim() {
        return Err(Error::Shape(format!(
            "expected input of length {}, got {}",
            net.feature_input_dim(),
            x.len()
        )));
    }
    Ok(net.tangent_features(x, set))
}

/// `(1/k) Σ_r ⟨f_r(x), f_r(y)⟩`, the output-averaged tangent kernel.
pub fn tangent_kernel(fx: &[Vec<f64>], fy: &[Vec<f64>]) -> f64 {
    let k = fx.len() as f64;
    fx.iter().zip(fy).map(|(a, b)| crate::linalg::dot(a, b)).sum::<f64>() / k
}
