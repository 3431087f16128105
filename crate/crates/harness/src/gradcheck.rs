//! Central finite differences against the resnet's analytic gradients.

use hiernet::linalg::gaussian_matrix;
use hiernet::resnet::{InitStyle, ResNetModel};
use hiernet::risk::Predictor;
use hiernet::RngStream;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;

/// Inputs are redrawn until every pre-activation is at least this far from
/// the ReLU kink, so a step of size [`STEP`] never crosses it.
const KINK_MARGIN: f64 = 1e-3;
/// Denominator floor. A central difference at step `1e-5` carries about
/// `1e-10` of rounding noise, so coordinates below this are judged on their
/// absolute error instead.
const FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub models: usize,
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// `(model, parameter, flat index)` of the worst coordinate.
    pub worst: (usize, &'static str, usize),
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= TOLERANCE
    }
}

fn objective(model: &ResNetModel, x: &[f64], y: &[f64]) -> f64 {
    0.5 * Predictor::predict(model, x)
        .iter()
        .zip(y)
        .map(|(o, t)| (o - t).powi(2))
        .sum::<f64>()
}

/// `|a − n| / max(|a|, |n|, 1e-3)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

struct ModelCheck {
    coordinates: usize,
    worst: f64,
    at: (&'static str, usize),
}

fn check_one(rng: &mut RngStream) -> Result<ModelCheck> {
    let d = 1 + rng.below(16);
    let k = 1 + rng.below(4);
    let m = k + rng.below(64 - k + 1);
    let mut model = ResNetModel::init(d, k, m, 1.0, 1.0, rng, InitStyle::Theory)?;
    model.w = gaussian_matrix(rng, m, d + 1, 0.2);
    model.v = gaussian_matrix(rng, m, k + 1, 0.2);
    let x = loop {
        let x: Vec<f64> = (0..d).map(|_| rng.normal() / (d as f64).sqrt()).collect();
        let fwd = model.forward(&x)?;
        if fwd.h1.iter().chain(&fwd.h2).all(|z| z.abs() > KINK_MARGIN) {
            break x;
        }
    };
    let y: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let (g, _) = model.gradient(&x, &y)?;

    let mut check = ModelCheck {
        coordinates: 0,
        worst: 0.0,
        at: ("W", 0),
    };
    for (name, analytic) in [("W", &g.w), ("V", &g.v), ("A", &g.a)] {
        for (idx, &a) in analytic.as_slice().iter().enumerate() {
            let shifted = |delta: f64| {
                let mut p = model.clone();
                let target = match name {
                    "W" => &mut p.w,
                    "V" => &mut p.v,
                    _ => &mut p.a,
                };
                target.as_mut_slice()[idx] += delta;
                objective(&p, &x, &y)
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let err = relative_error(a, numeric);
            if err > check.worst {
                check.worst = err;
                check.at = (name, idx);
            }
            check.coordinates += 1;
        }
    }
    Ok(check)
}

/// Checks `models` random resnets with `d ≤ 16`, `k ≤ 4`, `m ≤ 64`; model `i`
/// draws from stream `i` of `seed`.
pub fn gradient_check(models: usize, seed: u64) -> Result<GradcheckReport> {
    let checks = (0..models)
        .into_par_iter()
        .map(|i| check_one(&mut RngStream::new(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = GradcheckReport {
        models,
        coordinates: 0,
        max_relative_error: 0.0,
        worst: (0, "W", 0),
    };
    for (i, c) in checks.iter().enumerate() {
        report.coordinates += c.coordinates;
        if c.worst > report.max_relative_error {
            report.max_relative_error = c.worst;
            report.worst = (i, c.at.0, c.at.1);
        }
    }
    Ok(report)
}
