//! Kernel and feature-map separation runs next to a resnet trained on one
//! fixed subset of the same instance.

use std::time::Instant;

use hiernet::concept::{parity_instance, sample_dataset, DataSpec, Scaling};
use hiernet::lowerbound::{feature_map_separation_experiment, kernel_separation_experiment, SeparationReport};
use hiernet::resnet::{sgd_train, DataSource, EvalPlan, InitStyle, ResNetModel, RunRecord, TestEval};
use hiernet::risk::{expected_squared_error, EvalMode};
use hiernet::RngStream;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, SeparationConfig, SeparationResNetConfig};
use crate::error::Result;
use crate::exp::{finish, status, CELL_STREAM, TRAIN_STREAM};
use crate::output::{col, fmt_f64, fmt_opt, Column, ColumnKind, SuiteOutput, Table};

pub const KERNEL_COLUMNS: &[Column] = &[
    col("method", ColumnKind::Text),
    col("seed", ColumnKind::Integer),
    col("subset", ColumnKind::Text),
    col("risk", ColumnKind::Risk),
    col("below", ColumnKind::Integer),
];

pub const RESNET_COLUMNS: &[Column] = &[
    col("seed", ColumnKind::Integer),
    col("subset", ColumnKind::Text),
    col("train_risk", ColumnKind::Risk),
    col("test_risk", ColumnKind::Risk),
    col("composite_risk", ColumnKind::Risk),
    col("threshold", ColumnKind::Risk),
    col("below", ColumnKind::Integer),
    col("status", ColumnKind::Text),
];

fn subset_name(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Resnet outcome on the fixed subset.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetGap {
    pub record: Option<RunRecord>,
    /// `k · E[(H_1 − out_1)²]` by enumeration: the first output's error in
    /// the units the kernel reports use.
    pub composite_risk: Option<f64>,
}

/// Trains the resnet on `N` samples of `parity_instance(subset)` and measures
/// its exact risk on the cube.
pub fn resnet_gap(c: &SeparationConfig, r: &SeparationResNetConfig, seed: u64, rng: &RngStream) -> Result<ResNetGap> {
    let h = parity_instance(c.d, c.d1, c.k, c.alpha, &r.subset)?;
    let spec = DataSpec::uniform(c.d, Scaling::UnitSphere);
    let train = sample_dataset(&spec, &h, r.n_train, &mut RngStream::new(seed, TRAIN_STREAM))?;
    let mut model = ResNetModel::init(
        c.d,
        c.k,
        r.width,
        1.0,
        1.0,
        &mut rng.fork(0),
        InitStyle::Practice { mean_one: false },
    )?;
    let cfg = r
        .training
        .train_config(r.lr, r.weight_decay, hiernet::resnet::TrainableSet::Hidden);
    let plan = EvalPlan {
        test: TestEval::Population {
            target: &h,
            spec: &spec,
            mode: EvalMode::ExactEnumeration,
        },
        probe: None,
    };
    let record = finish(sgd_train(
        &mut model,
        &DataSource::Fixed(&train),
        &cfg,
        &plan,
        &mut rng.fork(1),
    ))?;
    let composite_risk = match record {
        Some(_) => {
            let e = expected_squared_error(&model, |x| h.eval(x), &spec, EvalMode::ExactEnumeration, Some(&[0]))?;
            Some(c.k as f64 * e)
        }
        None => None,
    };
    Ok(ResNetGap { record, composite_risk })
}

struct SeedResult {
    seed: u64,
    reports: Vec<SeparationReport>,
    gap: Option<ResNetGap>,
    seconds: f64,
}

fn run_seed(c: &SeparationConfig, seed: u64) -> Result<SeedResult> {
    let start = Instant::now();
    let base = RngStream::new(seed, CELL_STREAM);
    let setup = c.setup();
    let mut reports = vec![kernel_separation_experiment(
        &setup,
        &c.kernel,
        c.ridge,
        &mut base.fork(0),
    )?];
    for (i, map) in c.feature_maps.iter().enumerate() {
        reports.push(feature_map_separation_experiment(
            &setup,
            map,
            &mut base.fork(1 + i as u64),
        )?);
    }
    let gap = match &c.resnet {
        Some(r) => Some(resnet_gap(c, r, seed, &base.fork(1000))?),
        None => None,
    };
    Ok(SeedResult {
        seed,
        reports,
        gap,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_separation(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let c = cfg.separation.as_ref().expect("validated separation config");
    let results = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(c, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut kernel = Table::new("separation_kernel.csv", KERNEL_COLUMNS);
    let mut resnet = Table::new("separation_resnet.csv", RESNET_COLUMNS);
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    let mut cell_seconds = Vec::new();
    let mut required_diverged = Vec::new();
    let mut ordered: Vec<&SeedResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.seed);
    for res in ordered {
        let threshold = res.reports[0].threshold;
        for report in &res.reports {
            for (s, &risk) in report.subsets.iter().zip(&report.risks) {
                kernel.push(vec![
                    report.params.method.clone(),
                    res.seed.to_string(),
                    subset_name(s),
                    fmt_f64(risk),
                    u8::from(risk < report.threshold).to_string(),
                ]);
            }
            summary.push(json!({
                "seed": res.seed,
                "method": report.params.method,
                "fraction_below": report.fraction_below,
                "mean_risk": report.mean_risk(),
                "threshold": report.threshold,
            }));
        }
        reports.push(json!({ "seed": res.seed, "reports": res.reports }));
        if let (Some(gap), Some(r)) = (&res.gap, &c.resnet) {
            let below = gap.composite_risk.is_some_and(|e| e < threshold);
            resnet.push(vec![
                res.seed.to_string(),
                subset_name(&r.subset),
                fmt_opt(gap.record.as_ref().map(|x| x.train_risk)),
                fmt_opt(gap.record.as_ref().and_then(|x| x.test_risk)),
                fmt_opt(gap.composite_risk),
                fmt_f64(threshold),
                u8::from(below).to_string(),
                status(&gap.record),
            ]);
            if gap.record.is_none() {
                required_diverged.push(format!("resnet on subset {:?}, seed {}", r.subset, res.seed));
            }
        }
        cell_seconds.push((format!("seed={}", res.seed), res.seconds));
    }
    let mut tables = vec![kernel];
    if c.resnet.is_some() {
        tables.push(resnet);
    }
    Ok(SuiteOutput {
        tables,
        json: vec![("separation.json".into(), json!(reports))],
        summary: json!({ "comparator": "lt", "reports": summary }),
        cell_seconds,
        required_diverged,
    })
}
