use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The large absolute constant in both complexity measures.
pub const C_STAR: f64 = 1e4;

/// Finite Taylor expansion `Σ c_i z^i` about zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorSeries {
    pub coefficients: Vec<f64>,
    /// Radius over which the series is meant to be evaluated.
    pub radius: f64,
}

impl TaylorSeries {
    pub fn new(coefficients: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { coefficients, radius })
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    /// Derivative at `z`.
    pub fn eval_derivative(&self, z: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * z + i as f64 * c)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0.0)
    }
}

/// A smooth activation given by its (truncated) Taylor series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothActivation {
    pub series: TaylorSeries,
    /// Set when only the constant and odd-order terms may be nonzero.
    pub odd_and_zero_only: bool,
    /// Degree at which a transcendental function was cut, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_degree: Option<usize>,
}

impl SmoothActivation {
    pub fn new(series: TaylorSeries) -> Self {
        let odd_and_zero_only = has_only_odd_and_zero_terms(&series.coefficients);
        Self {
            series,
            odd_and_zero_only,
            truncation_degree: None,
        }
    }

    /// Fails if the flag is requested but an even term of order ≥ 2 is present.
    pub fn with_flag(series: TaylorSeries, odd_and_zero_only: bool) -> Result<Self> {
        if odd_and_zero_only && !has_only_odd_and_zero_terms(&series.coefficients) {
            return Err(Error::InvalidInput(
                "activation flagged odd-and-zero-only has an even-order term".into(),
            ));
        }
        Ok(Self {
            series,
            odd_and_zero_only,
            truncation_degree: None,
        })
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self::new(TaylorSeries {
            coefficients,
            radius: 1.0,
        })
    }

    /// `c · z^deg`
    pub fn monomial(deg: usize, c: f64) -> Self {
        let mut coefficients = vec![0.0; deg + 1];
        coefficients[deg] = c;
        Self::polynomial(coefficients)
    }

    pub fn identity() -> Self {
        Self::monomial(1, 1.0)
    }

    /// `sin z` cut after `degree`.
    pub fn sin_truncated(degree: usize) -> Self {
        let mut coefficients = vec![0.0; degree + 1];
        let mut fact = 1.0;
        for (i, c) in coefficients.iter_mut().enumerate() {
            if i > 0 {
                fact *= i as f64;
            }
            if i % 2 == 1 {
                let sign = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
                *c = sign / fact;
            }
        }
        let mut act = Self::polynomial(coefficients);
        act.truncation_degree = Some(degree);
        act
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.series.eval(z)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.series.coefficients
    }
}

fn has_only_odd_and_zero_terms(c: &[f64]) -> bool {
    c.iter().enumerate().all(|(i, &ci)| i == 0 || i % 2 == 1 || ci == 0.0)
}

/// `C_s(φ, R) = C* · Σ_i (i+1) R^i |c_i|`.
pub fn complexity_s(phi: &SmoothActivation, radius: f64) -> f64 {
    C_STAR
        * phi
            .coefficients()
            .iter()
            .enumerate()
            .map(|(i, c)| (i as f64 + 1.0) * radius.powi(i as i32) * c.abs())
            .sum::<f64>()
}

/// `C_ε(φ, R) = C* · Σ_i ((C*R)^i + (√log(1/ε)/√i · C*R)^i) |c_i|`, with
/// the `i = 0` term counted as `2|c_0|`.
pub fn complexity_eps(phi: &SmoothActivation, radius: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0,1), got {eps}")));
    }
    let log_term = (1.0 / eps).ln().sqrt();
    let cr = C_STAR * radius;
    let total: f64 = phi
        .coefficients()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                2.0 * c.abs()
            } else {
                let p = i as i32;
                (cr.powi(p) + (log_term / (i as f64).sqrt() * cr).powi(p)) * c.abs()
            }
        })
        .sum();
    Ok(C_STAR * total)
}
