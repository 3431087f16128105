use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::regime::RegimeParams;
use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, Matrix};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStyle {
    /// `A ~ N(0, 1/m)`, `W0 ~ N(0, σ_w²)`, `V0 ~ N(0, σ_v²/m)`.
    Theory,
    /// Every matrix drawn with deviation `1/(√fan_in + √fan_out)`; mean 0, or
    /// mean 1 when `mean_one` is set.
    Practice { mean_one: bool },
}

/// `out(x) = out1(x) + A σ((V0+V)(out1(x), 1))` with
/// `out1(x) = A σ((W0+W)(x, 1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetModel {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    /// `k × m`
    pub a: Matrix,
    /// `m × (d+1)`
    pub w0: Matrix,
    /// `m × (k+1)`
    pub v0: Matrix,
    pub w: Matrix,
    pub v: Matrix,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub tau_w: f64,
    pub tau_v: f64,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub h1: Vec<f64>,
    pub a1: Vec<f64>,
    pub out1: Vec<f64>,
    pub h2: Vec<f64>,
    pub a2: Vec<f64>,
    pub out: Vec<f64>,
}

/// Gradients with respect to `W`, `V` and `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w: Matrix,
    pub v: Matrix,
    pub a: Matrix,
}

impl Gradients {
    pub fn zeros(d: usize, k: usize, m: usize) -> Self {
        Self {
            w: Matrix::zeros(m, d + 1),
            v: Matrix::zeros(m, k + 1),
            a: Matrix::zeros(k, m),
        }
    }
}

#[inline]
pub(crate) fn relu(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn relu_grad(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `(W0 + W) (x, 1)` row by row, or `W0 (x, 1)` when `delta` is `None`.
pub(crate) fn affine_parts(base: &Matrix, delta: Option<&Matrix>, x: &[f64]) -> Vec<f64> {
    let cols = base.cols();
    (0..base.rows())
        .map(|i| {
            let b = base.row(i);
            match delta {
                Some(delta) => {
                    let d = delta.row(i);
                    let mut s = b[cols - 1] + d[cols - 1];
                    for j in 0..cols - 1 {
                        s += (b[j] + d[j]) * x[j];
                    }
                    s
                }
                None => b[cols - 1] + b[..cols - 1].iter().zip(x).map(|(w, v)| w * v).sum::<f64>(),
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    d: usize,
    k: usize,
    m: usize,
    sigma_w: f64,
    sigma_v: f64,
    tau_w: f64,
    tau_v: f64,
    step: usize,
}

impl ResNetModel {
    pub fn init(
        d: usize,
        k: usize,
        m: usize,
        sigma_w: f64,
        sigma_v: f64,
        rng: &mut RngStream,
        style: InitStyle,
    ) -> Result<Self> {
        if d == 0 || k == 0 || m < k {
            return Err(Error::InvalidInput(format!(
                "need d ≥ 1 and m ≥ k ≥ 1, got d={d}, k={k}, m={m}"
            )));
        }
        if !(sigma_w >= 0.0 && sigma_v >= 0.0) {
            return Err(Error::InvalidInput("init scales must be nonnegative".into()));
        }
        let mf = m as f64;
        let (a, w0, v0) = match style {
            InitStyle::Theory => (
                gaussian_matrix(rng, k, m, 1.0 / mf.sqrt()),
                gaussian_matrix(rng, m, d + 1, sigma_w),
                gaussian_matrix(rng, m, k + 1, sigma_v / mf.sqrt()),
            ),
            InitStyle::Practice { mean_one } => {
                let mean = if mean_one { 1.0 } else { 0.0 };
                let fan = |fan_in: usize, fan_out: usize| 1.0 / ((fan_in as f64).sqrt() + (fan_out as f64).sqrt());
                let mut a = gaussian_matrix(rng, k, m, fan(m, k));
                let mut w0 = gaussian_matrix(rng, m, d + 1, fan(d + 1, m));
                let mut v0 = gaussian_matrix(rng, m, k + 1, fan(k + 1, m));
                for mat in [&mut a, &mut w0, &mut v0] {
                    mat.as_mut_slice().iter_mut().for_each(|v| *v += mean);
                }
                (a, w0, v0)
            }
        };
        let caps = RegimeParams::defaults(m);
        Ok(Self {
            d,
            k,
            m,
            a,
            w0,
            v0,
            w: Matrix::zeros(m, d + 1),
            v: Matrix::zeros(m, k + 1),
            sigma_w,
            sigma_v,
            tau_w: caps.tau_w,
            tau_v: caps.tau_v,
        })
    }

    /// Theory-style model with every scale taken from [`RegimeParams::defaults`].
    pub fn init_theory_defaults(d: usize, k: usize, m: usize, rng: &mut RngStream) -> Result<Self> {
        let p = RegimeParams::defaults(m);
        Self::init(d, k, m, p.sigma_w, p.sigma_v, rng, InitStyle::Theory)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Shape(format!(
                "model expects input of length {}, got {}",
                self.d,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Forward {
        let h1 = affine_parts(&self.w0, Some(&self.w), x);
        let a1: Vec<f64> = h1.iter().map(|&z| relu(z)).collect();
        let out1 = self.a.matvec(&a1);
        let h2 = affine_parts(&self.v0, Some(&self.v), &out1);
        let a2: Vec<f64> = h2.iter().map(|&z| relu(z)).collect();
        let second = self.a.matvec(&a2);
        let out = out1.iter().zip(&second).map(|(p, q)| p + q).collect();
        Forward {
            h1,
            a1,
            out1,
            h2,
            a2,
            out,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.out)
    }

    /// Adds `scale · ∂⟨upstream, out⟩/∂θ` to `grads` for `θ ∈ {W, V, A}`.
    pub fn backprop_into(&self, x: &[f64], fwd: &Forward, upstream: &[f64], scale: f64, grads: &mut Gradients) {
        self.backprop_parts(x, fwd, upstream, scale, &mut grads.w, &mut grads.v, &mut grads.a);
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backprop_parts(
        &self,
        x: &[f64],
        fwd: &Forward,
        upstream: &[f64],
        scale: f64,
        gw: &mut Matrix,
        gv: &mut Matrix,
        ga: &mut Matrix,
    ) {
        let (d, k, m) = (self.d, self.k, self.m);
        let at_g = self.a.matvec_t(upstream);
        let delta2: Vec<f64> = (0..m).map(|i| relu_grad(fwd.h2[i]) * at_g[i]).collect();

        // Upstream into out1: the skip path plus the second layer's input.
        let mut g_out1 = upstream.to_vec();
        for i in 0..m {
            if delta2[i] == 0.0 {
                continue;
            }
            let v0 = self.v0.row(i);
            let v = self.v.row(i);
            for j in 0..k {
                g_out1[j] += (v0[j] + v[j]) * delta2[i];
            }
        }
        let at_g1 = self.a.matvec_t(&g_out1);

        for i in 0..m {
            let d2 = scale * delta2[i];
            if d2 != 0.0 {
                let row = gv.row_mut(i);
                for j in 0..k {
                    row[j] += d2 * fwd.out1[j];
                }
                row[k] += d2;
            }
            let d1 = scale * relu_grad(fwd.h1[i]) * at_g1[i];
            if d1 != 0.0 {
                let row = gw.row_mut(i);
                for j in 0..d {
                    row[j] += d1 * x[j];
                }
                row[d] += d1;
            }
        }
        for r in 0..k {
            let (gr, g1r) = (scale * upstream[r], scale * g_out1[r]);
            let row = ga.row_mut(r);
            for i in 0..m {
                row[i] += gr * fwd.a2[i] + g1r * fwd.a1[i];
            }
        }
    }

    /// Gradients of `½‖y − out(x)‖²` and the loss itself.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Gradients, f64)> {
        self.check_input(x)?;
        if y.len() != self.k {
            return Err(Error::Shape(format!(
                "label has length {}, expected {}",
                y.len(),
                self.k
            )));
        }
        let fwd = self.forward_unchecked(x);
        let residual: Vec<f64> = fwd.out.iter().zip(y).map(|(o, t)| o - t).collect();
        let loss = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
        let mut grads = Gradients::zeros(self.d, self.k, self.m);
        self.backprop_into(x, &fwd, &residual, 1.0, &mut grads);
        Ok((grads, loss))
    }

    pub fn is_finite(&self) -> bool {
        [&self.a, &self.w0, &self.v0, &self.w, &self.v]
            .iter()
            .all(|m| m.is_finite())
    }

    /// Writes `<stem>.bin` (little-endian `A, W0, V0, W, V`) and `<stem>.json`.
    pub fn save_checkpoint(&self, stem: &Path, step: usize) -> Result<()> {
        let mut bytes = Vec::new();
        for mat in [&self.a, &self.w0, &self.v0, &self.w, &self.v] {
            for v in mat.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(stem.with_extension("bin"), bytes)?;
        let sidecar = Sidecar {
            d: self.d,
            k: self.k,
            m: self.m,
            sigma_w: self.sigma_w,
            sigma_v: self.sigma_v,
            tau_w: self.tau_w,
            tau_v: self.tau_v,
            step,
        };
        fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Inverse of [`save_checkpoint`](Self::save_checkpoint); returns the model and its step.
    pub fn load_checkpoint(stem: &Path) -> Result<(Self, usize)> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        let (d, k, m) = (sidecar.d, sidecar.k, sidecar.m);
        let sizes = [(k, m), (m, d + 1), (m, k + 1), (m, d + 1), (m, k + 1)];
        let total: usize = sizes.iter().map(|(r, c)| r * c).sum();
        if bytes.len() != total * 8 {
            return Err(Error::Shape(format!(
                "checkpoint has {} bytes, expected {}",
                bytes.len(),
                total * 8
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let mut mats = Vec::with_capacity(5);
        for (r, c) in sizes {
            mats.push(Matrix::from_vec(r, c, values.by_ref().take(r * c).collect())?);
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("five matrices");
        let model = Self {
            d,
            k,
            m,
            a: next(),
            w0: next(),
            v0: next(),
            w: next(),
            v: next(),
            sigma_w: sidecar.sigma_w,
            sigma_v: sidecar.sigma_v,
            tau_w: sidecar.tau_w,
            tau_v: sidecar.tau_v,
        };
        Ok((model, sidecar.step))
    }
}
