use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::poly::{half_line_expectation, hermite_derivative, hermite_poly, truncation_bound, MAX_HERMITE_DEGREE};
use crate::concept::{complexity_eps, SmoothActivation};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One odd-degree channel of the fit: `(c_i / p′_i) · ĥ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteTerm {
    pub degree: usize,
    /// Taylor coefficient `c_i` of `φ`.
    pub taylor: f64,
    /// `p′_i = E_{α∼N(0,1)}[1[α ≥ 0] He_i(α)]`
    pub p_prime: f64,
    /// `B_i`
    pub bound: f64,
}

impl HermiteTerm {
    pub fn weight(&self) -> f64 {
        self.taylor / self.p_prime
    }
}

/// `h(z) = Σ_{odd i} (c_i/p′_i) ĥ_i(z) + 2c_0`, clamped to `[−C_ε(φ,1), C_ε(φ,1)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteFit {
    pub eps: f64,
    pub constant: f64,
    pub terms: Vec<HermiteTerm>,
    /// `C_ε(φ, 1)`
    pub range: f64,
    pub normalization: String,
}

/// `p′_i` by quadrature over the half line.
pub fn p_prime(i: usize) -> f64 {
    half_line_expectation(|z| hermite_poly(i, z))
}

impl HermiteFit {
    pub fn eval(&self, z: f64) -> f64 {
        let raw: f64 = self
            .terms
            .iter()
            .map(|t| t.weight() * hermite_poly(t.degree, z.clamp(-t.bound, t.bound)))
            .sum::<f64>()
            + 2.0 * self.constant;
        raw.clamp(-self.range, self.range)
    }

    /// Derivative of the unclamped sum; zero on every plateau.
    pub fn derivative(&self, z: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| z.abs() < t.bound)
            .map(|t| t.weight() * hermite_derivative(t.degree, z))
            .sum()
    }

    /// Largest `B_i` across the terms.
    pub fn max_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.bound).fold(0.0, f64::max)
    }
}

/// Builds `h` with `E[1[α ≥ 0] h(αx_1 + √(1−x_1²)β)] ≈ φ(x_1)` on `[−1, 1]`.
pub fn fit_indicator_function(phi: &SmoothActivation, eps: f64) -> Result<HermiteFit> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0,1), got {eps}")));
    }
    let c = phi.coefficients();
    if let Some(i) = (2..c.len()).step_by(2).find(|&i| c[i] != 0.0) {
        return Err(Error::InvalidInput(format!(
            "activation has a nonzero even term of order {i}"
        )));
    }
    if c.len() > MAX_HERMITE_DEGREE + 1 && c[MAX_HERMITE_DEGREE + 1..].iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidInput(format!(
            "activation degree exceeds {MAX_HERMITE_DEGREE}"
        )));
    }
    let terms = c
        .iter()
        .enumerate()
        .filter(|&(i, &ci)| i % 2 == 1 && ci != 0.0)
        .map(|(i, &ci)| HermiteTerm {
            degree: i,
            taylor: ci,
            p_prime: p_prime(i),
            bound: truncation_bound(i, eps),
        })
        .collect();
    Ok(HermiteFit {
        eps,
        constant: c.first().copied().unwrap_or(0.0),
        terms,
        range: complexity_eps(phi, 1.0, eps)?,
        normalization: "probabilists".into(),
    })
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitCheck {
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
}

impl FitCheck {
    pub fn within(&self, eps: f64, sigmas: f64) -> bool {
        (self.estimate - self.target).abs() <= eps + sigmas * self.stderr
    }
}

const MC_BLOCK: usize = 1 << 16;

/// Estimates `E_{α,β}[1[αx_1 + β√(1−x_1²) ≥ 0] h(α)]`.
///
/// Blocks of samples draw from their own streams so the result does not
/// depend on the thread count.
pub fn verify_fit(
    fit: &HermiteFit,
    phi: &SmoothActivation,
    x1: f64,
    mc: usize,
    rng: &mut RngStream,
) -> Result<FitCheck> {
    if !(-1.0..=1.0).contains(&x1) {
        return Err(Error::InvalidInput(format!("x1 must lie in [-1,1], got {x1}")));
    }
    if mc < 10_000 {
        return Err(Error::InvalidInput(format!("need at least 10^4 samples, got {mc}")));
    }
    let seed = rng.next_u64();
    let perp = (1.0 - x1 * x1).sqrt();
    let blocks = mc.div_ceil(MC_BLOCK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = RngStream::new(seed, b as u64);
            let len = MC_BLOCK.min(mc - b * MC_BLOCK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let (alpha, beta) = (r.normal(), r.normal());
                let v = if alpha * x1 + beta * perp >= 0.0 {
                    fit.eval(alpha)
                } else {
                    0.0
                };
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = mc as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(FitCheck {
        estimate: mean,
        target: phi.eval(x1),
        stderr: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::complexity_s;
    use crate::hermite::poly::{double_factorial, gaussian_expectation};

    #[test]
    fn p_prime_closed_form() {
        // ∫_0^∞ He_i φ = He_{i−1}(0) φ(0) and He_{2j}(0) = (−1)^j (2j−1)!!.
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((p_prime(1) - c).abs() < 1e-12);
        for i in (1..=9).step_by(2) {
            let j = (i - 1) / 2;
            let expected = if j % 2 == 0 { 1.0 } else { -1.0 } * double_factorial(i as i64 - 2) * c;
            assert!(
                (p_prime(i) - expected).abs() < 1e-10 * expected.abs().max(1.0),
                "i={i}: {}",
                p_prime(i)
            );
        }
    }

    #[test]
    fn constant_activation() {
        let phi = SmoothActivation::polynomial(vec![0.7]);
        let fit = fit_indicator_function(&phi, 0.1).unwrap();
        assert!(fit.terms.is_empty());
        assert_eq!(fit.eval(-3.0), 1.4);
        let check = verify_fit(&fit, &phi, 0.3, 100_000, &mut RngStream::new(1, 0)).unwrap();
        assert!(check.within(0.0, 4.0), "{check:?}");
    }

    #[test]
    fn identity_fit_is_scaled_first_hermite() {
        let fit = fit_indicator_function(&SmoothActivation::identity(), 0.05).unwrap();
        let root = (2.0 * std::f64::consts::PI).sqrt();
        for z in [-2.0, 0.3, 1.7] {
            assert!((fit.eval(z) - root * z).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_expectation_at_interior_point() {
        let phi = SmoothActivation::identity();
        let fit = fit_indicator_function(&phi, 0.05).unwrap();
        let check = verify_fit(&fit, &phi, 0.7, 1_000_000, &mut RngStream::new(2, 0)).unwrap();
        assert!(check.stderr < 0.002);
        assert!((check.estimate - 0.7).abs() <= 4.0 * check.stderr, "{check:?}");
    }

    #[test]
    fn odd_activation_vanishes_at_zero() {
        let phi = SmoothActivation::polynomial(vec![0.0, 0.5, 0.0, 1.0]);
        let fit = fit_indicator_function(&phi, 0.05).unwrap();
        let check = verify_fit(&fit, &phi, 0.0, 200_000, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(check.target, 0.0);
        assert!(check.estimate.abs() <= 4.0 * check.stderr, "{check:?}");
    }

    #[test]
    fn cubic_plus_constant_on_a_grid() {
        let phi = SmoothActivation::polynomial(vec![0.5, 0.0, 0.0, 1.0]);
        let fit = fit_indicator_function(&phi, 0.05).unwrap();
        let mut rng = RngStream::new(4, 0);
        for t in 0..9 {
            let x1 = -1.0 + 0.25 * t as f64;
            let check = verify_fit(&fit, &phi, x1, 1_000_000, &mut rng).unwrap();
            assert!(check.within(0.05, 4.0), "x1={x1}: {check:?}");
        }
    }

    #[test]
    fn even_terms_are_rejected() {
        let phi = SmoothActivation::polynomial(vec![0.0, 1.0, 0.5]);
        assert!(matches!(fit_indicator_function(&phi, 0.1), Err(Error::InvalidInput(_))));
        assert!(fit_indicator_function(&SmoothActivation::identity(), 1.0).is_err());
    }

    #[test]
    fn range_lipschitz_and_second_moment() {
        let phi = SmoothActivation::sin_truncated(7);
        let fit = fit_indicator_function(&phi, 0.05).unwrap();
        let reach = 10.0 * fit.max_bound();
        let n = 100_000;
        let mut prev = fit.eval(-reach);
        for s in 1..=n {
            let z = -reach + 2.0 * reach * s as f64 / n as f64;
            let v = fit.eval(z);
            assert!(v.abs() <= fit.range);
            assert!(fit.derivative(z).abs() <= fit.range);
            assert!((v - prev).abs() <= fit.range * 2.0 * reach / n as f64 * (1.0 + 1e-9));
            prev = v;
        }
        let second = gaussian_expectation(|z| fit.eval(z).powi(2));
        assert!(second <= complexity_s(&phi, 1.0).powi(2));
    }

    #[test]
    fn serializes_to_json() {
        let fit = fit_indicator_function(&SmoothActivation::polynomial(vec![0.1, 1.0, 0.0, -0.2]), 0.05).unwrap();
        let text = serde_json::to_string(&fit).unwrap();
        assert!(text.contains("\"normalization\":\"probabilists\""));
        assert_eq!(serde_json::from_str::<HermiteFit>(&text).unwrap(), fit);
    }
}
