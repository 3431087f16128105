//! The degree-6 parity `d³ x_1⋯x_6`: a low-norm reference net trained at
//! `d = 6`, its zero-padded and widened copies, and SGD sweeps from random
//! initializations at the full dimension.

use std::time::Instant;

use hiernet::baselines::FullyConnectedNet;
use hiernet::concept::{min_complexity_instance, DataSpec, Scaling, TargetFunction};
use hiernet::linalg::Matrix;
use hiernet::resnet::{sgd_train, DataSource, EvalPlan, LrDrop, RunRecord, TestEval, TrainConfig, TrainableSet};
use hiernet::risk::{population_risk, EvalMode, Predictor};
use hiernet::RngStream;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, MinComplexityConfig, ParityTraining, MIN_COMPLEXITY_COORDS};
use crate::error::Result;
use crate::exp::{finish, status, CELL_STREAM};
use crate::output::{col, fmt_f64, fmt_opt, Column, ColumnKind, SuiteOutput, Table};

pub const MINCOMPLEXITY_COLUMNS: &[Column] = &[
    col("phase", ColumnKind::Text),
    col("m", ColumnKind::Integer),
    col("lr", ColumnKind::Number),
    col("decay", ColumnKind::Number),
    col("seed", ColumnKind::Integer),
    col("train_risk", ColumnKind::Risk),
    col("test_risk", ColumnKind::Risk),
    col("frob_norm", ColumnKind::Risk),
    col("status", ColumnKind::Text),
];

/// Dimension the reference net is trained at.
pub const REFERENCE_DIM: usize = 6;

/// Largest cube whose risk is computed by enumeration.
const MAX_ENUMERATED_DIM: usize = 20;

fn eval_mode(d: usize, samples: usize, seed: u64) -> EvalMode {
    if d <= MAX_ENUMERATED_DIM {
        EvalMode::ExactEnumeration
    } else {
        EvalMode::MonteCarlo { samples, seed }
    }
}

fn practice(lr: f64, decay: f64, epochs: usize, lr_drop: Option<LrDrop>) -> TrainConfig {
    let mut cfg = TrainConfig::practice(lr, decay);
    cfg.steps = epochs;
    cfg.lr_drop = lr_drop;
    cfg.trainable = TrainableSet::Hidden;
    cfg.eval_every = epochs;
    cfg
}

/// Trains the two-layer net with a fixed balanced readout on fresh samples
/// of `target`; returns the trained net with its final record.
pub fn train_parity_net(
    target: &TargetFunction,
    m: usize,
    t: &ParityTraining,
    test: EvalMode,
    rng: &RngStream,
) -> Result<(FullyConnectedNet, Option<RunRecord>)> {
    let d = target.f.input_dim;
    let spec = DataSpec::uniform(d, Scaling::UnitSphere);
    let mut net = FullyConnectedNet::balanced_readout(d, m, t.hidden_std, &mut rng.fork(0))?;
    let cfg = practice(t.lr, t.weight_decay, t.epochs, t.lr_drop);
    let source = DataSource::Fresh {
        spec: &spec,
        target,
        epoch_size: t.epoch_size,
    };
    let plan = EvalPlan {
        test: TestEval::Population {
            target,
            spec: &spec,
            mode: test,
        },
        probe: None,
    };
    let record = finish(sgd_train(&mut net, &source, &cfg, &plan, &mut rng.fork(1)))?;
    Ok((net, record))
}

/// The reference net on `d` inputs: zero columns for the new coordinates and
/// hidden weights scaled by `√(d/6)`, so that on the `±1/√d` cube it computes
/// what the original computes on the `±1/√6` cube.
pub fn lift_reference(net: &FullyConnectedNet, d: usize) -> FullyConnectedNet {
    let mut lifted = net.pad_inputs(d - net.d);
    let s = (d as f64 / net.d as f64).sqrt();
    lifted.hidden[0].as_mut_slice().iter_mut().for_each(|v| *v *= s);
    lifted
}

/// Largest `|f(x) − f_pad((x, z))|` over the given inputs and padding values.
pub fn padding_deviation(net: &FullyConnectedNet, extra: usize, points: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let padded = net.pad_inputs(extra);
    points
        .iter()
        .map(|(x, z)| {
            let lifted: Vec<f64> = x.iter().chain(z).copied().collect();
            let a = net.predict(x);
            let b = padded.predict(&lifted);
            a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn frob(m: &Matrix) -> f64 {
    m.frobenius_norm()
}

struct SweepCell {
    m: usize,
    lr: f64,
    decay: f64,
}

fn reference_rows(c: &MinComplexityConfig, seed: u64) -> Result<(Vec<Vec<String>>, Option<RunRecord>, f64)> {
    let small = min_complexity_instance(REFERENCE_DIM, &MIN_COMPLEXITY_COORDS)?;
    let full = min_complexity_instance(c.d, &MIN_COMPLEXITY_COORDS)?;
    let rng = RngStream::new(seed, CELL_STREAM).fork(0);
    let (net, record) = train_parity_net(&small, c.width, &c.reference, EvalMode::ExactEnumeration, &rng)?;
    let r = &c.reference;
    let mut rows = vec![vec![
        "reference".into(),
        c.width.to_string(),
        fmt_f64(r.lr),
        fmt_f64(r.weight_decay),
        seed.to_string(),
        fmt_opt(record.as_ref().map(|x| x.train_risk)),
        fmt_opt(record.as_ref().and_then(|x| x.test_risk)),
        fmt_f64(frob(&net.hidden[0])),
        status(&record),
    ]];

    let mut probe = rng.fork(2);
    let points: Vec<(Vec<f64>, Vec<f64>)> = (0..64)
        .map(|_| {
            let x = (0..REFERENCE_DIM).map(|_| probe.normal()).collect();
            let z = (0..c.d - REFERENCE_DIM).map(|_| probe.normal()).collect();
            (x, z)
        })
        .collect();
    let deviation = padding_deviation(&net, c.d - REFERENCE_DIM, &points);

    if record.is_some() {
        let spec = DataSpec::uniform(c.d, Scaling::UnitSphere);
        let mode = eval_mode(c.d, c.test_samples, rng.fork(3).next_u64());
        let mut wide = lift_reference(&net, c.d);
        for level in 0..=c.duplications {
            if level > 0 {
                wide = wide.duplicate_rows()?;
            }
            let risk = population_risk(&wide, &full, &spec, mode)?;
            rows.push(vec![
                "padded".into(),
                wide.m.to_string(),
                fmt_f64(r.lr),
                fmt_f64(r.weight_decay),
                seed.to_string(),
                String::new(),
                fmt_f64(risk),
                fmt_f64(frob(&wide.hidden[0])),
                "ok".into(),
            ]);
        }
    }
    Ok((rows, record, deviation))
}

pub fn run_mincomplexity(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let c = cfg.mincomplexity.as_ref().expect("validated mincomplexity config");
    let started = Instant::now();
    let references = cfg
        .seeds
        .par_iter()
        .map(|&seed| reference_rows(c, seed))
        .collect::<Result<Vec<_>>>()?;
    let reference_seconds = started.elapsed().as_secs_f64();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut deviations = Vec::new();
    let mut diverged = Vec::new();
    for (&seed, (r, record, dev)) in cfg.seeds.iter().zip(references) {
        rows.extend(r);
        deviations.push(json!({ "seed": seed, "max_abs_deviation": dev }));
        if record.is_none() {
            diverged.push(seed);
        }
    }

    let mut cell_seconds = vec![("reference".to_string(), reference_seconds)];
    if let Some(s) = &c.sweep {
        let full = min_complexity_instance(c.d, &MIN_COMPLEXITY_COORDS)?;
        let grid: Vec<SweepCell> = s
            .widths
            .iter()
            .flat_map(|&m| {
                s.lrs
                    .iter()
                    .flat_map(move |&lr| s.decays.iter().map(move |&decay| SweepCell { m, lr, decay }))
            })
            .collect();
        let jobs: Vec<(u64, usize)> = cfg
            .seeds
            .iter()
            .flat_map(|&seed| (0..grid.len()).map(move |i| (seed, i)))
            .collect();
        let results = jobs
            .par_iter()
            .map(|&(seed, i)| {
                let start = Instant::now();
                let cell = &grid[i];
                let rng = RngStream::new(seed, CELL_STREAM).fork(1 + i as u64);
                let t = ParityTraining {
                    lr: cell.lr,
                    weight_decay: cell.decay,
                    hidden_std: s.hidden_std,
                    epochs: s.epochs,
                    epoch_size: s.epoch_size,
                    lr_drop: s.lr_drop,
                };
                let mode = eval_mode(c.d, c.test_samples, rng.fork(3).next_u64());
                let (net, record) = train_parity_net(&full, cell.m, &t, mode, &rng)?;
                Ok((net.hidden[0].frobenius_norm(), record, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sweep_rows: Vec<((usize, usize, u64), Vec<String>)> = Vec::new();
        for (&(seed, i), (norm, record, secs)) in jobs.iter().zip(results) {
            let cell = &grid[i];
            sweep_rows.push((
                (i, 0, seed),
                vec![
                    "sweep".into(),
                    cell.m.to_string(),
                    fmt_f64(cell.lr),
                    fmt_f64(cell.decay),
                    seed.to_string(),
                    fmt_opt(record.as_ref().map(|x| x.train_risk)),
                    fmt_opt(record.as_ref().and_then(|x| x.test_risk)),
                    fmt_f64(norm),
                    status(&record),
                ],
            ));
            cell_seconds.push((
                format!("sweep m={} lr={} decay={} seed={seed}", cell.m, cell.lr, cell.decay),
                secs,
            ));
        }
        sweep_rows.sort_by_key(|(k, _)| *k);
        rows.extend(sweep_rows.into_iter().map(|(_, r)| r));
    }

    let mut table = Table::new("mincomplexity.csv", MINCOMPLEXITY_COLUMNS);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(SuiteOutput {
        tables: vec![table],
        json: Vec::new(),
        summary: json!({
            "d": c.d,
            "reference_dim": REFERENCE_DIM,
            "padding_check": deviations,
            "norm_unit": "frob_norm is the Frobenius norm of the hidden weight matrix",
        }),
        cell_seconds,
        required_diverged: diverged
            .iter()
            .map(|s| format!("reference training, seed {s}"))
            .collect(),
    })
}
