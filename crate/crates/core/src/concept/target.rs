use serde::{Deserialize, Serialize};

use super::net::{NetForm, SmoothUnit, TwoLayerSmoothNet};
use super::taylor::SmoothActivation;
use crate::error::{Error, Result};

/// Per-coordinate magnitude of cube inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Coordinates are `±1/√d`, so every cube point has unit norm.
    UnitSphere,
    /// Coordinates are `±1`.
    Unscaled,
}

impl Scaling {
    pub fn coordinate(self, d: usize) -> f64 {
        match self {
            Scaling::UnitSphere => 1.0 / (d as f64).sqrt(),
            Scaling::Unscaled => 1.0,
        }
    }
}

/// `H(x) = β F(x) + α G(F(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFunction {
    pub d: usize,
    pub d1: usize,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "F")]
    pub f: TwoLayerSmoothNet,
    #[serde(rename = "G")]
    pub g: TwoLayerSmoothNet,
    pub scaling: Scaling,
}

impl TargetFunction {
    pub fn new(
        f: TwoLayerSmoothNet,
        g: TwoLayerSmoothNet,
        alpha: f64,
        beta: f64,
        d1: usize,
        scaling: Scaling,
    ) -> Result<Self> {
        let t = Self {
            d: f.input_dim,
            d1,
            k: f.output_dim,
            alpha,
            beta,
            f,
            g,
            scaling,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidInstance(format!(
                "alpha must lie in [0,1), got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidInstance(format!(
                "beta must lie in [0,1], got {}",
                self.beta
            )));
        }
        if self.g.input_dim != self.k || self.g.output_dim != self.k || self.f.output_dim != self.k {
            return Err(Error::InvalidInstance(
                "F must map to ℝ^k and G must map ℝ^k to ℝ^k".into(),
            ));
        }
        if self.f.input_dim != self.d || self.d1 > self.d {
            return Err(Error::InvalidInstance(format!("need d1 ≤ d = {}", self.d)));
        }
        self.f.validate()?;
        self.g.validate()
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut t = self.clone();
        t.alpha = alpha;
        t.validate()?;
        Ok(t)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut t = self.clone();
        t.beta = beta;
        t.validate()?;
        Ok(t)
    }

    /// `(F(x), G(F(x)))`.
    pub fn eval_parts(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let fx = self.f.eval(x)?;
        let gfx = self.g.eval_unchecked(&fx);
        Ok((fx, gfx))
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (fx, gfx) = self.eval_parts(x)?;
        Ok(fx
            .iter()
            .zip(&gfx)
            .map(|(f, g)| self.beta * f + self.alpha * g)
            .collect())
    }

    /// The composite part `α G(F(x))` alone.
    pub fn eval_composite(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, gfx) = self.eval_parts(x)?;
        Ok(gfx.iter().map(|g| self.alpha * g).collect())
    }

    /// `k α²`: the squared error left by a model that fits `βF` but not `αG(F)`
    /// on a parity target whose composite coordinates are `±1`.
    pub fn threshold(&self) -> f64 {
        self.k as f64 * self.alpha * self.alpha
    }
}

/// Product `Π_{j∈coords} z_j` as a width-`2^k` two-layer smooth net by the
/// sign-pattern (polarization) expansion
/// `Π z_j = 1/(2^k k!) Σ_s (Π s_j) (Σ s_j z_j)^k`.
///
/// Returns units whose sum equals `scale · Π z_j`, with directions of norm `1/√2`.
fn product_units(dim: usize, coords: &[usize], scale: f64, sign: f64) -> Result<Vec<SmoothUnit>> {
    let k = coords.len();
    if k == 0 || k > 20 {
        return Err(Error::InvalidInstance(format!("product degree {k} out of range")));
    }
    let kf = k as f64;
    let mut factorial = 1.0;
    for i in 2..=k {
        factorial *= i as f64;
    }
    // Direction v_s = s/√(2k) on the selected coordinates, so Σ s z = √(2k)·⟨v_s, z⟩.
    let dir = 1.0 / (2.0 * kf).sqrt();
    let coeff = scale * (2.0 * kf).powf(kf / 2.0) / (2f64.powi(k as i32) * factorial);
    let mut units = Vec::with_capacity(1 << k);
    for pattern in 0u32..(1 << k) {
        let mut w = vec![0.0; dim];
        let mut parity = sign;
        for (bit, &c) in coords.iter().enumerate() {
            let s = if pattern >> bit & 1 == 0 { 1.0 } else { -1.0 };
            w[c] = s * dir;
            parity *= s;
        }
        units.push(SmoothUnit {
            a: parity,
            w1: w,
            w2: None,
            activation: SmoothActivation::monomial(k, coeff),
        });
    }
    Ok(units)
}

/// Hard instance on the `±1/√d` cube: `F_j(x) = √(d/k)·x_{i_j}` and every
/// `G_r(z) = k^{k/2}/√k · Π z_j`, so `G_r(F(x)) = (1/√k) Π_j (√d x_{i_j})`.
///
/// `indices` are 0-based and must be distinct members of `0..d1`.
pub fn parity_instance(d: usize, d1: usize, k: usize, alpha: f64, indices: &[usize]) -> Result<TargetFunction> {
    if !(2 <= k && k <= d1 && d1 <= d) {
        return Err(Error::InvalidInstance(format!(
            "need 2 ≤ k ≤ d1 ≤ d, got k={k}, d1={d1}, d={d}"
        )));
    }
    if indices.len() != k {
        return Err(Error::InvalidInstance(format!(
            "expected {k} indices, got {}",
            indices.len()
        )));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k || sorted.iter().any(|&i| i >= d1) {
        return Err(Error::InvalidInstance(format!(
            "indices {indices:?} must be distinct and < d1 = {d1}"
        )));
    }

    let df = d as f64;
    let kf = k as f64;
    let slope = std::f64::consts::SQRT_2 * (df / kf).sqrt();
    let f_units = indices
        .iter()
        .map(|&i| {
            let mut w = vec![0.0; d];
            w[i] = std::f64::consts::FRAC_1_SQRT_2;
            vec![SmoothUnit {
                a: 1.0,
                w1: w,
                w2: None,
                activation: SmoothActivation::monomial(1, slope),
            }]
        })
        .collect();
    let f = TwoLayerSmoothNet::new(d, k, NetForm::Simple, f_units)?;

    let g_scale = kf.powf(kf / 2.0) / kf.sqrt();
    let coords: Vec<usize> = (0..k).collect();
    let row = product_units(k, &coords, g_scale, 1.0)?;
    let g = TwoLayerSmoothNet::new(k, k, NetForm::Simple, vec![row; k])?;
    TargetFunction::new(f, g, alpha, 1.0, d1, Scaling::UnitSphere)
}

/// `y = d^{q/2} Π_{j∈indices} x_j` on the `±1/√d` cube (`q = |indices|`),
/// a `±1` parity with no composite part.
pub fn min_complexity_instance(d: usize, indices: &[usize]) -> Result<TargetFunction> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != indices.len() || sorted.iter().any(|&i| i >= d) {
        return Err(Error::InvalidInstance(format!(
            "indices {indices:?} must be distinct and < d = {d}"
        )));
    }
    let scale = (d as f64).powf(indices.len() as f64 / 2.0);
    let f = TwoLayerSmoothNet::new(d, 1, NetForm::Simple, vec![product_units(d, indices, scale, 1.0)?])?;
    let g = TwoLayerSmoothNet::zero(1, 1, NetForm::Simple);
    TargetFunction::new(f, g, 0.0, 1.0, d, Scaling::UnitSphere)
}

/// The synthetic benchmark over `{±1}^30`: `F(x) = (x1x2, …, x29x30)` and
/// `G_i(y) = (−1)^i y1y2y3y4` for `i = 1..15`.
pub fn benchmark_instance(alpha: f64) -> Result<TargetFunction> {
    const D: usize = 30;
    const K: usize = 15;
    let f_units = (0..K)
        .map(|r| product_units(D, &[2 * r, 2 * r + 1], 1.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let f = TwoLayerSmoothNet::new(D, K, NetForm::Simple, f_units)?;
    let g_units = (0..K)
        .map(|r| {
            // Output r is G_{r+1}; (−1)^{r+1}.
            let sign = if r % 2 == 0 { -1.0 } else { 1.0 };
            product_units(K, &[0, 1, 2, 3], 1.0, sign)
        })
        .collect::<Result<Vec<_>>>()?;
    let g = TwoLayerSmoothNet::new(K, K, NetForm::Simple, g_units)?;
    TargetFunction::new(f, g, alpha, 1.0, D, Scaling::Unscaled)
}
