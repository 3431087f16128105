//! Monte-Carlo verification of the indicator fit, the `p′_i` table and the
//! existential weight construction.

use std::time::Instant;

use hiernet::concept::{NetForm, SmoothUnit, TwoLayerSmoothNet};
use hiernet::hermite::{
    construct_existential_weights, double_factorial, existential_init, fit_indicator_function, p_prime,
    unit_sphere_points, verify_existential, verify_fit, FitCheck,
};
use hiernet::RngStream;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExistentialConfig, ExperimentConfig, HermiteConfig};
use crate::error::Result;
use crate::exp::CELL_STREAM;
use crate::output::{col, fmt_f64, Column, ColumnKind, SuiteOutput, Table};

pub const FIT_COLUMNS: &[Column] = &[
    col("seed", ColumnKind::Integer),
    col("x1", ColumnKind::Number),
    col("estimate", ColumnKind::Number),
    col("target", ColumnKind::Number),
    col("stderr", ColumnKind::Risk),
    col("within", ColumnKind::Integer),
];

pub const PPRIME_COLUMNS: &[Column] = &[
    col("degree", ColumnKind::Integer),
    col("p_prime", ColumnKind::Number),
    col("closed_form", ColumnKind::Number),
    col("lower_bound", ColumnKind::Number),
    col("meets_bound", ColumnKind::Integer),
];

/// Standard errors allowed on top of `ε` when judging a fit estimate.
pub const FIT_SIGMAS: f64 = 4.0;

/// `x1` values evenly spaced over `[−1, 1]`.
pub fn grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|t| -1.0 + 2.0 * t as f64 / (points - 1) as f64)
        .collect()
}

/// Fit checks at every grid point; each point draws from its own stream.
pub fn fit_checks(h: &HermiteConfig, seed: u64) -> Result<Vec<(f64, FitCheck)>> {
    let phi = h.activation();
    let fit = fit_indicator_function(&phi, h.eps)?;
    let base = RngStream::new(seed, CELL_STREAM);
    grid(h.grid)
        .into_iter()
        .enumerate()
        .map(|(i, x1)| Ok((x1, verify_fit(&fit, &phi, x1, h.mc, &mut base.fork(i as u64))?)))
        .collect()
}

/// `(i, p′_i, He_{i−1}(0)/√(2π), (i−1)!!/4)` for odd `i ≤ max_degree`.
pub fn p_prime_table(max_degree: usize) -> Vec<(usize, f64, f64, f64)> {
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    (1..=max_degree)
        .step_by(2)
        .map(|i| {
            let sign = if (i - 1) / 2 % 2 == 0 { 1.0 } else { -1.0 };
            let closed = sign * double_factorial(i as i64 - 2) * c;
            (i, p_prime(i), closed, double_factorial(i as i64 - 1) / 4.0)
        })
        .collect()
}

/// Worst relative error of the construction for a single unit with
/// `φ(z) = z` and random unit directions `w*_1`, `w*_2`.
pub fn existential_error(e: &ExistentialConfig, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, CELL_STREAM).fork(1 << 20);
    let dirs = unit_sphere_points(e.d + 1, 2, &mut rng);
    let unit = SmoothUnit {
        a: 1.0,
        w1: dirs[0].clone(),
        w2: Some(dirs[1].clone()),
        activation: hiernet::concept::SmoothActivation::identity(),
    };
    let net = TwoLayerSmoothNet::new(e.d, 1, NetForm::General, vec![vec![unit]])?;
    let (w0, a) = existential_init(e.d, 1, e.m, &mut rng);
    let w_star = construct_existential_weights(&net, &w0, &a, e.eps)?;
    let points = unit_sphere_points(e.d, e.points, &mut rng);
    Ok(verify_existential(&w_star, &net, &w0, &a, &points)?)
}

pub fn run_hermite(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let h = cfg.hermite.as_ref().expect("validated hermite config");
    let start = Instant::now();
    let checks = cfg
        .seeds
        .par_iter()
        .map(|&seed| fit_checks(h, seed).map(|c| (seed, c)))
        .collect::<Result<Vec<_>>>()?;
    let mut cell_seconds = vec![("fit".to_string(), start.elapsed().as_secs_f64())];

    let mut fit = Table::new("hermite_fit.csv", FIT_COLUMNS);
    let mut ordered = checks;
    ordered.sort_by_key(|(seed, _)| *seed);
    for (seed, rows) in &ordered {
        for (x1, c) in rows {
            fit.push(vec![
                seed.to_string(),
                fmt_f64(*x1),
                fmt_f64(c.estimate),
                fmt_f64(c.target),
                fmt_f64(c.stderr),
                u8::from(c.within(h.eps, FIT_SIGMAS)).to_string(),
            ]);
        }
    }
    let mut table = Table::new("hermite_pprime.csv", PPRIME_COLUMNS);
    for (i, p, closed, bound) in p_prime_table(h.max_degree) {
        table.push(vec![
            i.to_string(),
            fmt_f64(p),
            fmt_f64(closed),
            fmt_f64(bound),
            u8::from(p.abs() >= bound).to_string(),
        ]);
    }
    let mut json_out = Vec::new();
    if let Some(e) = &h.existential {
        let start = Instant::now();
        let errors = cfg
            .seeds
            .par_iter()
            .map(|&seed| existential_error(e, seed).map(|err| json!({ "seed": seed, "max_relative_error": err })))
            .collect::<Result<Vec<_>>>()?;
        cell_seconds.push(("existential".into(), start.elapsed().as_secs_f64()));
        json_out.push((
            "existential.json".to_string(),
            json!({ "config": e, "results": errors }),
        ));
    }
    let fitted = fit_indicator_function(&h.activation(), h.eps)?;
    Ok(SuiteOutput {
        tables: vec![fit, table],
        json: json_out,
        summary: json!({ "fit": fitted, "sigmas": FIT_SIGMAS }),
        cell_seconds,
        required_diverged: Vec::new(),
    })
}
