//! The two benchmark suites on the 30-bit instance: learners against kernel
//! baselines over a width grid, and the resnet as the base signal fades.

use std::collections::BTreeMap;
use std::time::Instant;

use hiernet::baselines::{FcInit, FullyConnectedNet, LinearizedNet};
use hiernet::concept::{benchmark_instance, sample_dataset, DataSpec, Dataset, Scaling};
use hiernet::resnet::{
    sgd_train, DataSource, EvalPlan, InitStyle, ResNetModel, RunRecord, TestEval, TrainConfig, Trainable,
};
use hiernet::RngStream;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Algorithm, AlgorithmConfig, ExperimentConfig, TrainingConfig};
use crate::error::Result;
use crate::output::{col, fmt_f64, fmt_opt, Column, ColumnKind, SuiteOutput, Table};

pub const EXP1_COLUMNS: &[Column] = &[
    col("tag", ColumnKind::Text),
    col("m", ColumnKind::Integer),
    col("seed", ColumnKind::Integer),
    col("test_risk", ColumnKind::Risk),
    col("status", ColumnKind::Text),
];

pub const EXP2_COLUMNS: &[Column] = &[
    col("variant", ColumnKind::Text),
    col("beta", ColumnKind::Number),
    col("seed", ColumnKind::Integer),
    col("test_risk", ColumnKind::Risk),
    col("status", ColumnKind::Text),
];

pub(crate) const TRAIN_STREAM: u64 = 0;
pub(crate) const TEST_STREAM: u64 = 1;
pub(crate) const CELL_STREAM: u64 = 2;

/// Final record of a run, or `None` when it diverged.
pub(crate) fn finish(result: hiernet::Result<Vec<RunRecord>>) -> Result<Option<RunRecord>> {
    match result {
        Ok(records) => Ok(records.last().cloned()),
        Err(hiernet::Error::Diverged { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn status(record: &Option<RunRecord>) -> String {
    if record.is_some() { "ok" } else { "diverged" }.into()
}

fn train<M: Trainable>(
    mut model: M,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Option<RunRecord>> {
    let plan = EvalPlan {
        test: TestEval::Dataset(test),
        probe: None,
    };
    finish(sgd_train(&mut model, &DataSource::Fixed(train), cfg, &plan, rng))
}

/// Trains one learner of width `m` and returns its final record.
pub fn run_algorithm(
    alg: &AlgorithmConfig,
    m: usize,
    training: &TrainingConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    rng: &RngStream,
) -> Result<Option<RunRecord>> {
    let (d, k) = (train_set.input_dim(), train_set.output_dim());
    let cfg = training.train_config(alg.lr, alg.weight_decay, alg.tag.trainable());
    let mut init = rng.fork(0);
    let mut sgd = rng.fork(1);
    let fc = |depth: usize, init: &mut RngStream| FullyConnectedNet::init(d, k, m, depth, true, FcInit::Practice, init);
    match alg.tag {
        Algorithm::ResNetAll | Algorithm::ResNetHidden => {
            let model = ResNetModel::init(d, k, m, 1.0, 1.0, &mut init, InitStyle::Practice { mean_one: false })?;
            train(model, train_set, test_set, &cfg, &mut sgd)
        }
        Algorithm::ThreeLayerAll | Algorithm::ThreeLayerHidden => {
            train(fc(3, &mut init)?, train_set, test_set, &cfg, &mut sgd)
        }
        Algorithm::TwoLayerAll | Algorithm::TwoLayerHidden | Algorithm::Last => {
            train(fc(2, &mut init)?, train_set, test_set, &cfg, &mut sgd)
        }
        Algorithm::Ntk => train(
            LinearizedNet::new(fc(2, &mut init)?),
            train_set,
            test_set,
            &cfg,
            &mut sgd,
        ),
    }
}

struct Split {
    seed: u64,
    train: Dataset,
    test: Dataset,
}

fn splits(seeds: &[u64], n_train: usize, n_test: usize, beta: Option<f64>, alpha: f64) -> Result<Vec<Split>> {
    let mut h = benchmark_instance(alpha)?;
    if let Some(b) = beta {
        h = h.with_beta(b)?;
    }
    let spec = DataSpec::uniform(30, Scaling::Unscaled);
    seeds
        .iter()
        .map(|&seed| {
            Ok(Split {
                seed,
                train: sample_dataset(&spec, &h, n_train, &mut RngStream::new(seed, TRAIN_STREAM))?,
                test: sample_dataset(&spec, &h, n_test, &mut RngStream::new(seed, TEST_STREAM))?,
            })
        })
        .collect()
}

struct Cell {
    record: Option<RunRecord>,
    seconds: f64,
}

pub fn run_exp1(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let e = cfg.exp1.as_ref().expect("validated exp1 config");
    let data = splits(&cfg.seeds, e.n_train, e.n_test, None, e.alpha)?;
    let grid: Vec<(usize, usize, usize)> = (0..data.len())
        .flat_map(|s| (0..e.algorithms.len()).flat_map(move |a| (0..e.widths.len()).map(move |w| (s, a, w))))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(s, a, w)| {
            let start = Instant::now();
            let cell = (a * e.widths.len() + w) as u64;
            let rng = RngStream::new(data[s].seed, CELL_STREAM).fork(cell);
            let record = run_algorithm(
                &e.algorithms[a],
                e.widths[w],
                &e.training,
                &data[s].train,
                &data[s].test,
                &rng,
            )?;
            Ok(Cell {
                record,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<Cell>>>()?;

    let mut rows: BTreeMap<(usize, usize, u64), &Cell> = BTreeMap::new();
    let mut cell_seconds = Vec::new();
    for (&(s, a, w), cell) in grid.iter().zip(&cells) {
        rows.insert((a, e.widths[w], data[s].seed), cell);
        cell_seconds.push((
            format!("{} m={} seed={}", e.algorithms[a].tag.tag(), e.widths[w], data[s].seed),
            cell.seconds,
        ));
    }
    let mut tables = Vec::new();
    let mut best = Vec::new();
    for (a, alg) in e.algorithms.iter().enumerate() {
        let mut t = Table::new(format!("exp1_{}.csv", alg.tag.slug()), EXP1_COLUMNS);
        let mut means: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&(_, m, seed), cell) in rows.range((a, 0, 0)..=(a, usize::MAX, u64::MAX)) {
            let risk = cell.record.as_ref().and_then(|r| r.test_risk);
            t.push(vec![
                alg.tag.tag().into(),
                m.to_string(),
                seed.to_string(),
                fmt_opt(risk),
                status(&cell.record),
            ]);
            means.entry(m).or_default().extend(risk);
        }
        tables.push(t);
        let selected = means
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(&m, v)| (m, v.iter().sum::<f64>() / v.len() as f64))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((m, mean)) = selected {
            best.push(json!({ "tag": alg.tag.tag(), "m": m, "mean_test_risk": mean }));
        }
    }
    let threshold = benchmark_instance(e.alpha)?.threshold();
    Ok(SuiteOutput {
        tables,
        json: Vec::new(),
        summary: json!({
            "threshold": threshold,
            "threshold_label": "test error k*alpha^2",
            "best_cells": best,
            "best_cell_selection": "lowest mean test risk over seeds; selected on test data",
        }),
        cell_seconds,
        required_diverged: Vec::new(),
    })
}

pub fn run_exp2(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let e = cfg.exp2.as_ref().expect("validated exp2 config");
    let data: Vec<Vec<Split>> = e
        .betas
        .iter()
        .map(|&b| splits(&cfg.seeds, e.n_train, e.n_test, Some(b), e.alpha))
        .collect::<Result<_>>()?;
    let grid: Vec<(usize, usize, usize)> = (0..cfg.seeds.len())
        .flat_map(|s| (0..e.variants.len()).flat_map(move |v| (0..e.betas.len()).map(move |b| (s, v, b))))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(s, v, b)| {
            let start = Instant::now();
            let variant = &e.variants[v];
            let alg = AlgorithmConfig {
                tag: variant.variant.algorithm(),
                lr: variant.lr,
                weight_decay: variant.weight_decay,
            };
            let split = &data[b][s];
            let cell = (v * e.betas.len() + b) as u64;
            let rng = RngStream::new(split.seed, CELL_STREAM).fork(cell);
            let record = run_algorithm(&alg, e.width, &e.training, &split.train, &split.test, &rng)?;
            Ok(Cell {
                record,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<Cell>>>()?;

    let mut keyed: Vec<((usize, usize, u64), &Cell)> = grid
        .iter()
        .zip(&cells)
        .map(|(&(s, v, b), cell)| ((v, b, cfg.seeds[s]), cell))
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    let mut t = Table::new("exp2.csv", EXP2_COLUMNS);
    let mut cell_seconds = Vec::new();
    for ((v, b, seed), cell) in keyed {
        let tag = e.variants[v].variant.algorithm().tag();
        let beta = e.betas[b];
        t.push(vec![
            tag.into(),
            fmt_f64(beta),
            seed.to_string(),
            fmt_opt(cell.record.as_ref().and_then(|r| r.test_risk)),
            status(&cell.record),
        ]);
        cell_seconds.push((format!("{tag} beta={beta} seed={seed}"), cell.seconds));
    }
    Ok(SuiteOutput {
        tables: vec![t],
        json: Vec::new(),
        summary: json!({ "alpha": e.alpha, "width": e.width }),
        cell_seconds,
        required_diverged: Vec::new(),
    })
}
