//! Walsh–Hadamard spectra of cube functions and the Parseval self-check.

use std::path::Path;

use hiernet::lowerbound::{naive_walsh_hadamard, CubeFunction};
use hiernet::RngStream;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::output::{col, fmt_f64, Column, ColumnKind, Table};

pub const SPECTRUM_COLUMNS: &[Column] = &[col("subset", ColumnKind::Text), col("coefficient", ColumnKind::Number)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParsevalCheck {
    pub d: usize,
    pub functions: usize,
    /// `max |Σ_S λ_S² − E[f²]|`
    pub max_parseval_error: f64,
    /// Largest coefficient gap between the fast and the naive transform.
    pub max_naive_gap: Option<f64>,
}

/// A function with independent `N(0,1)` values on the `2^d` vertices.
pub fn random_cube_function(d: usize, rng: &mut RngStream) -> Result<CubeFunction> {
    Ok(CubeFunction::new(d, (0..1usize << d).map(|_| rng.normal()).collect())?)
}

/// Parseval on `functions` random functions; function `i` draws from stream `i`.
/// The naive transform is compared as well when `d` is small enough for it.
pub fn parseval_check(d: usize, functions: usize, seed: u64) -> Result<ParsevalCheck> {
    let results = (0..functions)
        .into_par_iter()
        .map(|i| {
            let f = random_cube_function(d, &mut RngStream::new(seed, i as u64))?;
            let fast = f.walsh_hadamard();
            let parseval = (fast.energy() - f.mean_square()).abs();
            let gap = match naive_walsh_hadamard(&f) {
                Ok(naive) => Some(
                    fast.coeffs
                        .iter()
                        .zip(&naive.coeffs)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                ),
                Err(_) => None,
            };
            Ok((parseval, gap))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_naive_gap = results
        .iter()
        .map(|r| r.1)
        .collect::<Option<Vec<f64>>>()
        .map(|g| g.into_iter().fold(0.0, f64::max));
    Ok(ParsevalCheck {
        d,
        functions,
        max_parseval_error: results.iter().map(|r| r.0).fold(0.0, f64::max),
        max_naive_gap,
    })
}

/// Reads `2^d` values, one per line, in vertex index order.
pub fn read_values(path: &Path) -> Result<CubeFunction> {
    let text = std::fs::read_to_string(path)?;
    let values = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| HarnessError::Config(format!("bad value {l:?}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if !values.len().is_power_of_two() {
        return Err(HarnessError::Config(format!(
            "{} values is not a power of two",
            values.len()
        )));
    }
    Ok(CubeFunction::new(values.len().trailing_zeros() as usize, values)?)
}

/// Every Fourier coefficient, subsets written as space-separated coordinates.
pub fn spectrum_table(f: &CubeFunction) -> Table {
    let spectrum = f.walsh_hadamard();
    let mut t = Table::new("fourier.csv", SPECTRUM_COLUMNS);
    for (mask, &c) in spectrum.coeffs.iter().enumerate() {
        let subset: Vec<String> = (0..f.dim())
            .filter(|j| mask >> j & 1 == 1)
            .map(|j| j.to_string())
            .collect();
        t.push(vec![subset.join(" "), fmt_f64(c)]);
    }
    t
}
