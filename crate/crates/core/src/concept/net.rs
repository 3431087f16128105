use serde::{Deserialize, Serialize};

use super::taylor::{complexity_s, SmoothActivation};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Which of the two concept-class parameterizations a net follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetForm {
    /// `F_r(x) = Σ_i a_{r,i} φ_{r,i}(⟨w_{r,i}, x⟩)`, directions of norm `1/√2`.
    Simple,
    /// `F_r(x) = Σ_i a_{r,i} φ_{r,i}(⟨w_{1,i}, (x,1)⟩ / ‖(x,1)‖) · ⟨w_{2,i}, (x,1)⟩`,
    /// unit directions in `ℝ^{d+1}` and odd-and-zero-only activations.
    General,
}

impl NetForm {
    pub fn direction_norm(self) -> f64 {
        match self {
            NetForm::Simple => std::f64::consts::FRAC_1_SQRT_2,
            NetForm::General => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothUnit {
    pub a: f64,
    pub w1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<Vec<f64>>,
    pub activation: SmoothActivation,
}

/// Two-layer network with smooth activations; the building block of targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerSmoothNet {
    pub input_dim: usize,
    pub output_dim: usize,
    pub form: NetForm,
    /// `units[r]` holds the `p` terms of output coordinate `r`.
    pub units: Vec<Vec<SmoothUnit>>,
}

const NORM_TOL: f64 = 1e-12;

impl TwoLayerSmoothNet {
    pub fn new(input_dim: usize, output_dim: usize, form: NetForm, units: Vec<Vec<SmoothUnit>>) -> Result<Self> {
        let net = Self {
            input_dim,
            output_dim,
            form,
            units,
        };
        net.validate()?;
        Ok(net)
    }

    /// Net with no units; evaluates to zero.
    pub fn zero(input_dim: usize, output_dim: usize, form: NetForm) -> Self {
        Self {
            input_dim,
            output_dim,
            form,
            units: vec![Vec::new(); output_dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.len() != self.output_dim {
            return Err(Error::InvalidInstance(format!(
                "expected {} output rows, got {}",
                self.output_dim,
                self.units.len()
            )));
        }
        let p = self.width();
        let dir_dim = match self.form {
            NetForm::Simple => self.input_dim,
            NetForm::General => self.input_dim + 1,
        };
        let want = self.form.direction_norm();
        for (r, row) in self.units.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidInstance(format!(
                    "output {r} has width {}, expected {p}",
                    row.len()
                )));
            }
            for (i, u) in row.iter().enumerate() {
                if !(u.a.abs() <= 1.0) {
                    return Err(Error::InvalidInstance(format!("|a[{r}][{i}]| = {} > 1", u.a.abs())));
                }
                let check = |v: &[f64], name: &str| -> Result<()> {
                    if v.len() != dir_dim {
                        return Err(Error::InvalidInstance(format!(
                            "{name}[{r}][{i}] has length {}, expected {dir_dim}",
                            v.len()
                        )));
                    }
                    let n = norm(v);
                    if (n - want).abs() > NORM_TOL {
                        return Err(Error::InvalidInstance(format!(
                            "{name}[{r}][{i}] has norm {n}, expected {want}"
                        )));
                    }
                    Ok(())
                };
                check(&u.w1, "w1")?;
                match (self.form, &u.w2) {
                    (NetForm::General, Some(w2)) => check(w2, "w2")?,
                    (NetForm::General, None) => return Err(Error::InvalidInstance(format!("w2[{r}][{i}] missing"))),
                    (NetForm::Simple, Some(_)) => {
                        return Err(Error::InvalidInstance("simple-form units carry no w2".into()))
                    }
                    (NetForm::Simple, None) => {}
                }
                if self.form == NetForm::General && !u.activation.odd_and_zero_only {
                    return Err(Error::InvalidInstance(format!(
                        "activation [{r}][{i}] must have only zero- and odd-order terms"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.units.first().map_or(0, Vec::len)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "net expects input of length {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self.form {
            NetForm::Simple => self
                .units
                .iter()
                .map(|row| row.iter().map(|u| u.a * u.activation.eval(dot(&u.w1, x))).sum())
                .collect(),
            NetForm::General => {
                let mut xt = x.to_vec();
                xt.push(1.0);
                let len = norm(&xt);
                self.units
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|u| {
                                let w2 = u.w2.as_deref().expect("validated general unit");
                                u.a * u.activation.eval(dot(&u.w1, &xt) / len) * dot(w2, &xt)
                            })
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// `max_{r,i} C_s(φ_{r,i}, R)`.
    pub fn max_complexity_s(&self, radius: f64) -> f64 {
        self.units
            .iter()
            .flatten()
            .map(|u| complexity_s(&u.activation, radius))
            .fold(0.0, f64::max)
    }
}

/// Upper bound `√k · p · max C_s(φ, 1)` on the Lipschitz constant.
pub fn lipschitz_bound(net: &TwoLayerSmoothNet) -> f64 {
    (net.output_dim as f64).sqrt() * net.width() as f64 * net.max_complexity_s(1.0)
}
