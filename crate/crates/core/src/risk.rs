//! Squared-error risk of any predictor, exactly over a finite cube or by sampling.
//!
//! Every risk here is `E‖y − f(x)‖²` without a `½` factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::{DataSpec, Dataset, TargetFunction};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Human-readable statement of the risk convention, stamped into outputs.
pub const RISK_CONVENTION: &str = "mean squared error E||y - f(x)||^2 without a 1/2 factor";

pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Output at `x`; callers guarantee `x.len() == input_dim()`.
    fn predict(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    ExactEnumeration,
    MonteCarlo { samples: usize, seed: u64 },
}

const CHUNK: usize = 1024;

/// `E ‖label(x)[c] − f(x)[c]‖²` summed over `coords` (all outputs when `None`).
///
/// Partial sums are formed over fixed-size chunks and added in order, so the
/// result does not depend on the thread count.
pub fn expected_squared_error<P, L>(
    model: &P,
    label: L,
    spec: &DataSpec,
    mode: EvalMode,
    coords: Option<&[usize]>,
) -> Result<f64>
where
    P: Predictor + ?Sized,
    L: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if model.input_dim() != spec.d {
        return Err(Error::Shape(format!(
            "model input {} vs data dimension {}",
            model.input_dim(),
            spec.d
        )));
    }
    let all: Vec<usize> = (0..model.output_dim()).collect();
    let coords = coords.unwrap_or(&all);
    let point_error = |x: &[f64]| -> Result<f64> {
        let y = label(x)?;
        let out = model.predict(x);
        Ok(coords.iter().map(|&c| (y[c] - out[c]).powi(2)).sum())
    };
    match mode {
        EvalMode::ExactEnumeration => {
            let points = spec.enumerate()?;
            let n = points.len() as f64;
            let partial = points
                .par_chunks(CHUNK)
                .map(|chunk| chunk.iter().map(|x| point_error(x)).sum::<Result<f64>>())
                .collect::<Result<Vec<f64>>>()?;
            Ok(partial.iter().sum::<f64>() / n)
        }
        EvalMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidInput("Monte Carlo risk needs at least one sample".into()));
            }
            let chunks = samples.div_ceil(CHUNK);
            let partial = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = RngStream::new(seed, c as u64);
                    let len = CHUNK.min(samples - c * CHUNK);
                    let mut s = 0.0;
                    for _ in 0..len {
                        s += point_error(&spec.sample_x(&mut rng)?)?;
                    }
                    Ok(s)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(partial.iter().sum::<f64>() / samples as f64)
        }
    }
}

/// `E ‖H(x) − f(x)‖²` under `spec`.
pub fn population_risk<P: Predictor + ?Sized>(
    model: &P,
    target: &TargetFunction,
    spec: &DataSpec,
    mode: EvalMode,
) -> Result<f64> {
    expected_squared_error(model, |x| target.eval(x), spec, mode, None)
}

/// Mean of `‖y_i − f(x_i)‖²` over a dataset.
pub fn empirical_risk<P: Predictor + ?Sized>(model: &P, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if data.input_dim() != model.input_dim() || data.output_dim() != model.output_dim() {
        return Err(Error::Shape("dataset and model dimensions differ".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let partial: Vec<f64> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let (x, y) = data.sample(i);
                    model
                        .predict(x)
                        .iter()
                        .zip(y)
                        .map(|(o, t)| (t - o).powi(2))
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok(partial.iter().sum::<f64>() / data.len() as f64)
}
