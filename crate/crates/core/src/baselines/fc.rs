use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, Matrix};
use crate::resnet::{Diagnostics, Layer, ParamGroup, Rate, Trainable};
use crate::risk::Predictor;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FcInit {
    /// Deviation `1/(√fan_in + √fan_out)` for every matrix.
    Practice,
    /// Explicit deviations for the hidden layers and the output layer.
    Gaussian { hidden_std: f64, output_std: f64 },
}

/// `out(x) = A (σ(h_L), 1)` with `h_l = W_l (a_{l−1}, 1)`, `a_0 = x`.
/// Without biases the `1` columns are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullyConnectedNet {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub bias: bool,
    /// One or two hidden layers, each `m × (fan_in [+1])`.
    pub hidden: Vec<Matrix>,
    /// `k × (m [+1])`
    pub output: Matrix,
}

/// Forward pass values: pre-activations and activations per hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FcForward {
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

fn relu_grad(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `M (v, 1)`, or `M v` without a bias column.
fn apply(mat: &Matrix, v: &[f64], bias: bool) -> Vec<f64> {
    let n = v.len();
    (0..mat.rows())
        .map(|i| {
            let row = mat.row(i);
            let s: f64 = row[..n].iter().zip(v).map(|(w, x)| w * x).sum();
            if bias {
                s + row[n]
            } else {
                s
            }
        })
        .collect()
}

/// `g ← g + scale · δ (v, 1)ᵀ`.
fn add_outer(g: &mut Matrix, delta: &[f64], v: &[f64], bias: bool, scale: f64) {
    let n = v.len();
    for (i, &di) in delta.iter().enumerate() {
        let c = scale * di;
        if c == 0.0 {
            continue;
        }
        let row = g.row_mut(i);
        for (r, x) in row[..n].iter_mut().zip(v) {
            *r += c * x;
        }
        if bias {
            row[n] += c;
        }
    }
}

/// `(M[:, :n])ᵀ δ`.
fn back(mat: &Matrix, delta: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, &di) in delta.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(&mat.row(i)[..n]) {
            *o += w * di;
        }
    }
    out
}

impl FullyConnectedNet {
    /// `depth` counts weight layers: 2 or 3.
    pub fn init(
        d: usize,
        k: usize,
        m: usize,
        depth: usize,
        bias: bool,
        init: FcInit,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if !(depth == 2 || depth == 3) {
            return Err(Error::InvalidInput(format!("depth must be 2 or 3, got {depth}")));
        }
        if d == 0 || k == 0 || m == 0 {
            return Err(Error::InvalidInput("dimensions must be positive".into()));
        }
        let b = usize::from(bias);
        let std = |fan_in: usize, fan_out: usize, output: bool| match init {
            FcInit::Practice => 1.0 / ((fan_in as f64).sqrt() + (fan_out as f64).sqrt()),
            FcInit::Gaussian { hidden_std, output_std } => {
                if output {
                    output_std
                } else {
                    hidden_std
                }
            }
        };
        let mut hidden = vec![gaussian_matrix(rng, m, d + b, std(d + b, m, false))];
        if depth == 3 {
            hidden.push(gaussian_matrix(rng, m, m + b, std(m + b, m, false)));
        }
        let output = gaussian_matrix(rng, k, m + b, std(m + b, k, true));
        Ok(Self {
            d,
            k,
            m,
            bias,
            hidden,
            output,
        })
    }

    /// Bias-free `aᵀσ(Wx)` with `W` entries `N(0, hidden_std²)` and the
    /// fixed readout `a = (+1/√m, …, −1/√m, …)`, half of each sign.
    pub fn balanced_readout(d: usize, m: usize, hidden_std: f64, rng: &mut RngStream) -> Result<Self> {
        if d == 0 || m == 0 || !m.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "need d > 0 and an even width, got d={d}, m={m}"
            )));
        }
        let c = 1.0 / (m as f64).sqrt();
        let output = Matrix::from_vec(1, m, (0..m).map(|j| if j < m / 2 { c } else { -c }).collect())?;
        Ok(Self {
            d,
            k: 1,
            m,
            bias: false,
            hidden: vec![gaussian_matrix(rng, m, d, hidden_std)],
            output,
        })
    }

    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<FcForward> {
        if x.len() != self.d {
            return Err(Error::Shape(format!(
                "net expects input of length {}, got {}",
                self.d,
                x.len()
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> FcForward {
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut act: Vec<Vec<f64>> = Vec::with_capacity(self.hidden.len());
        for w in &self.hidden {
            let input = act.last().map_or(x, Vec::as_slice);
            let h = apply(w, input, self.bias);
            act.push(h.iter().map(|&z| relu(z)).collect());
            pre.push(h);
        }
        let out = apply(&self.output, act.last().expect("at least one hidden layer"), self.bias);
        FcForward { pre, act, out }
    }

    /// `(σ(h_l), 1)` for hidden layer `layer` (0-based), the conjugate-kernel features.
    pub fn hidden_features(&self, x: &[f64], layer: usize) -> Result<Vec<f64>> {
        if layer >= self.hidden.len() {
            return Err(Error::InvalidInput(format!(
                "net has {} hidden layers",
                self.hidden.len()
            )));
        }
        let mut f = self.forward(x)?.act.swap_remove(layer);
        if self.bias {
            f.push(1.0);
        }
        Ok(f)
    }

    /// Adds `scale · ∂⟨upstream, out⟩/∂θ` to `grads` (hidden layers, then output).
    pub fn backprop_into(&self, x: &[f64], fwd: &FcForward, upstream: &[f64], scale: f64, grads: &mut [Matrix]) {
        let layers = self.hidden.len();
        add_outer(&mut grads[layers], upstream, &fwd.act[layers - 1], self.bias, scale);
        let mut delta: Vec<f64> = back(&self.output, upstream, self.m)
            .iter()
            .zip(&fwd.pre[layers - 1])
            .map(|(g, &z)| g * relu_grad(z))
            .collect();
        for l in (0..layers).rev() {
            let input = if l == 0 { x } else { &fwd.act[l - 1] };
            add_outer(&mut grads[l], &delta, input, self.bias, scale);
            if l > 0 {
                delta = back(&self.hidden[l], &delta, self.m)
                    .iter()
                    .zip(&fwd.pre[l - 1])
                    .map(|(g, &z)| g * relu_grad(z))
                    .collect();
            }
        }
    }

    /// Directional derivative of the output along `tangent` (same layout as the parameters).
    pub fn jvp(&self, x: &[f64], fwd: &FcForward, tangent: &[Matrix]) -> Vec<f64> {
        let layers = self.hidden.len();
        let mut da: Vec<f64> = Vec::new();
        for l in 0..layers {
            let input = if l == 0 { x } else { &fwd.act[l - 1] };
            let mut dh = apply(&tangent[l], input, self.bias);
            if l > 0 {
                let carried = apply_no_bias(&self.hidden[l], &da);
                dh.iter_mut().zip(carried).for_each(|(a, b)| *a += b);
            }
            da = dh.iter().zip(&fwd.pre[l]).map(|(v, &z)| v * relu_grad(z)).collect();
        }
        let mut dout = apply(&tangent[layers], &fwd.act[layers - 1], self.bias);
        let carried = apply_no_bias(&self.output, &da);
        dout.iter_mut().zip(carried).for_each(|(a, b)| *a += b);
        dout
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.output))
            .map(Matrix::shape)
            .collect()
    }

    fn layer_mut(&mut self, group: usize) -> &mut Matrix {
        if group < self.hidden.len() {
            &mut self.hidden[group]
        } else {
            &mut self.output
        }
    }

    fn layer(&self, group: usize) -> &Matrix {
        if group < self.hidden.len() {
            &self.hidden[group]
        } else {
            &self.output
        }
    }

    /// The same function on inputs with `extra` trailing coordinates, which it ignores.
    pub fn pad_inputs(&self, extra: usize) -> Self {
        let w = &self.hidden[0];
        let b = usize::from(self.bias);
        let mut padded = Matrix::zeros(self.m, self.d + extra + b);
        for i in 0..self.m {
            let row = w.row(i);
            let dst = padded.row_mut(i);
            dst[..self.d].copy_from_slice(&row[..self.d]);
            if self.bias {
                dst[self.d + extra] = row[self.d];
            }
        }
        let mut net = self.clone();
        net.d += extra;
        net.hidden[0] = padded;
        net
    }

    /// Doubles a two-layer net's width: each hidden unit is split into two
    /// copies scaled by `1/√2`, as is its output weight. The function and the
    /// Frobenius norm of the hidden layer are unchanged.
    pub fn duplicate_rows(&self) -> Result<Self> {
        if self.hidden.len() != 1 {
            return Err(Error::InvalidInput("row duplication needs a two-layer net".into()));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = &self.hidden[0];
        let mut rows = Vec::with_capacity(2 * self.m);
        for _ in 0..2 {
            for i in 0..self.m {
                rows.push(w.row(i).iter().map(|v| v * s).collect::<Vec<f64>>());
            }
        }
        let mut out_rows = Vec::with_capacity(self.k);
        for r in 0..self.k {
            let row = self.output.row(r);
            let mut new = Vec::with_capacity(2 * self.m + usize::from(self.bias));
            for _ in 0..2 {
                new.extend(row[..self.m].iter().map(|v| v * s));
            }
            if self.bias {
                new.push(row[self.m]);
            }
            out_rows.push(new);
        }
        Ok(Self {
            d: self.d,
            k: self.k,
            m: 2 * self.m,
            bias: self.bias,
            hidden: vec![Matrix::from_rows(&rows)?],
            output: Matrix::from_rows(&out_rows)?,
        })
    }
}

fn apply_no_bias(mat: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..mat.rows())
        .map(|i| mat.row(i)[..v.len()].iter().zip(v).map(|(w, x)| w * x).sum())
        .collect()
}

fn fc_groups(net: &FullyConnectedNet) -> Vec<ParamGroup> {
    let names = ["W1", "W2"];
    let mut groups: Vec<ParamGroup> = net
        .hidden
        .iter()
        .enumerate()
        .map(|(l, w)| ParamGroup {
            name: names[l],
            rows: w.rows(),
            cols: w.cols(),
            rate: if l == 0 { Rate::W } else { Rate::V },
            layer: Layer::Hidden,
        })
        .collect();
    groups.push(ParamGroup {
        name: "A",
        rows: net.output.rows(),
        cols: net.output.cols(),
        rate: Rate::W,
        layer: Layer::Output,
    });
    groups
}

fn residual_loss(out: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
    let r: Vec<f64> = out.iter().zip(y).map(|(o, t)| o - t).collect();
    let loss = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    (r, loss)
}

impl Predictor for FullyConnectedNet {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn output_dim(&self) -> usize {
        self.k
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward_unchecked(x).out
    }
}

impl Trainable for FullyConnectedNet {
    fn param_groups(&self) -> Vec<ParamGroup> {
        fc_groups(self)
    }

    fn accumulate_gradient(&self, x: &[f64], y: &[f64], scale: f64, grads: &mut [Matrix]) -> f64 {
        let fwd = self.forward_unchecked(x);
        let (r, loss) = residual_loss(&fwd.out, y);
        self.backprop_into(x, &fwd, &r, scale, grads);
        loss
    }

    fn add_weight_decay(&self, group: usize, wd: f64, grad: &mut Matrix) {
        for (g, w) in grad.as_mut_slice().iter_mut().zip(self.layer(group).as_slice()) {
            *g += wd * w;
        }
    }

    fn descend(&mut self, group: usize, lr: f64, dir: &Matrix) {
        for (w, g) in self.layer_mut(group).as_mut_slice().iter_mut().zip(dir.as_slice()) {
            *w -= lr * g;
        }
    }

    fn diagnostics(&self, _probe: Option<&[f64]>) -> Diagnostics {
        Diagnostics {
            frob_w: self.hidden[0].frobenius_norm(),
            frob_v: self.hidden.get(1).map_or(0.0, Matrix::frobenius_norm),
            flips1: 0,
            flips2: 0,
        }
    }
}

/// First-order expansion `f0(x) + J(x) δ` of a frozen net around its
/// initialization; training `δ` is regression with the tangent kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedNet {
    pub base: FullyConnectedNet,
    pub delta: Vec<Matrix>,
}

impl LinearizedNet {
    pub fn new(base: FullyConnectedNet) -> Self {
        let delta = base
            .param_shapes()
            .into_iter()
            .map(|(r, c)| Matrix::zeros(r, c))
            .collect();
        Self { base, delta }
    }
}

impl Predictor for LinearizedNet {
    fn input_dim(&self) -> usize {
        self.base.d
    }

    fn output_dim(&self) -> usize {
        self.base.k
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let fwd = self.base.forward_unchecked(x);
        let dout = self.base.jvp(x, &fwd, &self.delta);
        fwd.out.iter().zip(dout).map(|(a, b)| a + b).collect()
    }
}

impl Trainable for LinearizedNet {
    fn param_groups(&self) -> Vec<ParamGroup> {
        fc_groups(&self.base)
    }

    fn accumulate_gradient(&self, x: &[f64], y: &[f64], scale: f64, grads: &mut [Matrix]) -> f64 {
        let fwd = self.base.forward_unchecked(x);
        let dout = self.base.jvp(x, &fwd, &self.delta);
        let out: Vec<f64> = fwd.out.iter().zip(dout).map(|(a, b)| a + b).collect();
        let (r, loss) = residual_loss(&out, y);
        // The linear model's parameter gradient is Jᵀr, the frozen net's backprop.
        self.base.backprop_into(x, &fwd, &r, scale, grads);
        loss
    }

    fn add_weight_decay(&self, group: usize, wd: f64, grad: &mut Matrix) {
        for (g, w) in grad.as_mut_slice().iter_mut().zip(self.delta[group].as_slice()) {
            *g += wd * w;
        }
    }

    fn descend(&mut self, group: usize, lr: f64, dir: &Matrix) {
        for (w, g) in self.delta[group].as_mut_slice().iter_mut().zip(dir.as_slice()) {
            *w -= lr * g;
        }
    }

    fn diagnostics(&self, _probe: Option<&[f64]>) -> Diagnostics {
        Diagnostics {
            frob_w: self.delta[0].frobenius_norm(),
            frob_v: if self.delta.len() > 2 {
                self.delta[1].frobenius_norm()
            } else {
                0.0
            },
            flips1: 0,
            flips2: 0,
        }
    }
}
