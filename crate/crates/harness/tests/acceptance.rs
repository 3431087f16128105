//! One test per acceptance criterion; each prints a single PASS/FAIL line.
//!
//! Criteria 2, 4 and 6 read the CSVs of one `--threads 1` run of the
//! checked-in configs, and criterion 10 reruns those configs on more threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hiernet::linalg::gaussian_matrix;
use hiernet::lowerbound::offdiag_energy_census;
use hiernet::RngStream;
use hiernet_harness::fourier::parseval_check;
use hiernet_harness::gradcheck::{gradient_check, TOLERANCE};
use hiernet_harness::hermite::{existential_error, fit_checks, p_prime_table, FIT_SIGMAS};
use hiernet_harness::{run_suite, ExperimentConfig};

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    writeln!(
        std::io::stdout().lock(),
        "criterion {criterion:>2}: {verdict}  {detail}"
    )
    .unwrap();
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

fn run_cli(command: &str, config: &str, out: &Path, threads: usize) {
    let status = Command::new(env!("CARGO_BIN_EXE_hiernet"))
        .args([command, "--config"])
        .arg(config_path(config))
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "{command} exited with {status}");
}

struct Runs {
    dir: tempfile::TempDir,
    exp1: Duration,
    separation: Duration,
}

impl Runs {
    fn exp1(&self) -> PathBuf {
        self.dir.path().join("exp1")
    }

    fn separation(&self) -> PathBuf {
        self.dir.path().join("separation")
    }
}

fn single_thread_runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        run_cli("run-exp1", "exp1.toml", &dir.path().join("exp1"), 1);
        let exp1 = start.elapsed();
        let start = Instant::now();
        run_cli("run-separation", "separation.toml", &dir.path().join("separation"), 1);
        Runs {
            dir,
            exp1,
            separation: start.elapsed(),
        }
    })
}

fn read_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            headers
                .iter()
                .map(String::from)
                .zip(r.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn number(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or(f64::NAN)
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let r = gradient_check(50, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = r.passed() && r.max_relative_error <= TOLERANCE && secs < 30.0;
    report(
        1,
        pass,
        &format!(
            "{} coordinates, max relative error {:.2e}, {secs:.1}s",
            r.coordinates, r.max_relative_error
        ),
    );
    assert!(pass, "{r:?}");
}

#[test]
fn criterion_02_experiment_one_separation() {
    let runs = single_thread_runs();
    let mut per_seed: BTreeMap<String, BTreeMap<&str, f64>> = BTreeMap::new();
    for (slug, tag) in [("3resnet-hidden", "resnet"), ("last", "last"), ("ntk", "ntk")] {
        for row in read_rows(&runs.exp1().join(format!("exp1_{slug}.csv"))) {
            per_seed
                .entry(row["seed"].clone())
                .or_default()
                .insert(tag, number(&row, "test_risk"));
        }
    }
    let good = per_seed
        .values()
        .filter(|r| r["resnet"] < 1.35 && r["last"] >= 1.2 && r["ntk"] >= 1.2)
        .count();
    let mean = |tag: &str| per_seed.values().map(|r| r[tag]).sum::<f64>() / per_seed.len() as f64;
    let secs = runs.exp1.as_secs_f64();
    let pass = per_seed.len() == 3 && good >= 2 && secs < 1200.0;
    report(
        2,
        pass,
        &format!(
            "{good}/3 seeds separate; mean test risk resnet {:.3}, last {:.3}, NTK {:.3}; {secs:.0}s",
            mean("resnet"),
            mean("last"),
            mean("ntk")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_parseval_exactness() {
    let start = Instant::now();
    let big = parseval_check(12, 100, 1).unwrap();
    let small = parseval_check(6, 100, 2).unwrap();
    let gap = small.max_naive_gap.unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = big.max_parseval_error <= 1e-10 && gap <= 1e-12 && secs < 10.0;
    report(
        3,
        pass,
        &format!(
            "parseval error {:.1e} at d=12, naive gap {gap:.1e} at d=6, {secs:.2}s",
            big.max_parseval_error
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_kernel_census() {
    let runs = single_thread_runs();
    let alpha = config("separation.toml").separation.unwrap().alpha;
    let rows: Vec<_> = read_rows(&runs.separation().join("separation_kernel.csv"))
        .into_iter()
        .filter(|r| r["method"] == "kernel")
        .collect();
    let mut by_seed: BTreeMap<String, Vec<(f64, bool)>> = BTreeMap::new();
    for r in &rows {
        by_seed
            .entry(r["seed"].clone())
            .or_default()
            .push((number(r, "risk"), r["below"] == "1"));
    }
    let limit = 2.0 * 20.0 / 66.0 + 0.15;
    let mut details = Vec::new();
    let mut pass = !by_seed.is_empty() && runs.separation.as_secs_f64() < 120.0;
    for (seed, subsets) in &by_seed {
        let fraction = subsets.iter().filter(|s| s.1).count() as f64 / subsets.len() as f64;
        let mean = subsets.iter().map(|s| s.0).sum::<f64>() / subsets.len() as f64;
        pass &= subsets.len() == 66 && fraction < limit && mean >= 0.5 * alpha * alpha;
        details.push(format!("seed {seed}: fraction {fraction:.3}, mean {mean:.4}"));
    }
    report(
        4,
        pass,
        &format!(
            "{} (limits < {limit:.3}, ≥ {:.3})",
            details.join("; "),
            0.5 * alpha * alpha
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_offdiagonal_energy() {
    let start = Instant::now();
    let (n, r) = (10, 20);
    let counts: Vec<usize> = (0..20u64)
        .map(|trial| {
            let a = gaussian_matrix(&mut RngStream::new(5, trial), n, r, 1.0);
            offdiag_energy_census(&a)
                .unwrap()
                .iter()
                .filter(|&&e| e <= 1.0 / 9.0)
                .count()
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let worst = counts.iter().copied().max().unwrap();
    let pass = worst < r && secs < 10.0;
    report(
        5,
        pass,
        &format!("largest low-energy count {worst} of R={r} over 20 trials, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_resnet_beats_kernel_floor() {
    let runs = single_thread_runs();
    let rows = read_rows(&runs.separation().join("separation_resnet.csv"));
    let below: Vec<bool> = rows
        .iter()
        .map(|r| r["status"] == "ok" && number(r, "composite_risk") < number(r, "threshold"))
        .collect();
    let good = below.iter().filter(|&&b| b).count();
    let risks: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2e}", number(r, "composite_risk")))
        .collect();
    let pass = rows.len() == 3 && good >= 2 && runs.separation.as_secs_f64() < 600.0;
    report(
        6,
        pass,
        &format!(
            "{good}/3 seeds below {}; composite risks {}",
            rows[0]["threshold"],
            risks.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_hermite_fit() {
    let start = Instant::now();
    let h = config("hermite.toml").hermite.unwrap();
    let checks = fit_checks(&h, 1).unwrap();
    let fits = checks.iter().filter(|(_, c)| c.within(0.05, FIT_SIGMAS)).count();
    let table = p_prime_table(9);
    let p1_error = (table[0].1 - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs();
    let failing: Vec<String> = table
        .iter()
        .filter(|(_, p, _, bound)| p.abs() < *bound)
        .map(|(i, p, _, bound)| format!("|p'_{i}| = {:.3} < {bound}", p.abs()))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = checks.len() == 9 && fits == 9 && p1_error <= 1e-3 && failing.is_empty() && secs < 60.0;
    report(
        7,
        pass,
        &format!(
            "{fits}/9 grid fits, p'_1 error {p1_error:.1e}, bound violations: [{}], {secs:.1}s",
            failing.join("; ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_existential_construction() {
    let start = Instant::now();
    let e = config("hermite.toml").hermite.unwrap().existential.unwrap();
    let err = existential_error(&e, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = e.m == 100_000 && e.points == 50 && err <= 0.15 && secs < 120.0;
    report(
        8,
        pass,
        &format!("max relative error {err:.4} over {} points, {secs:.1}s", e.points),
    );
    assert!(pass);
}

#[test]
fn criterion_09_min_complexity_reference() {
    let start = Instant::now();
    let mut cfg = config("mincomplexity.toml");
    cfg.mincomplexity.as_mut().unwrap().sweep = None;
    let out = run_suite(&cfg, 0).unwrap();
    let table = out.table("mincomplexity.csv").unwrap();
    let cap = 10.5 * 6f64.sqrt();
    let mut good = 0;
    let mut details = Vec::new();
    for row in table.rows.iter().filter(|r| r[0] == "reference") {
        let risk: f64 = row[6].parse().unwrap_or(f64::NAN);
        let norm: f64 = row[7].parse().unwrap();
        if risk <= 0.12 && norm <= cap {
            good += 1;
        }
        details.push(format!(
            "seed {}: error {risk:.3}, |W| {:.2}·√6",
            row[4],
            norm / 6f64.sqrt()
        ));
    }
    let padding = out.summary["padding_check"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["max_abs_deviation"].as_f64().unwrap())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = details.len() == 3 && good >= 2 && padding <= 1e-12 && secs < 600.0;
    report(
        9,
        pass,
        &format!(
            "{good}/3 seeds; {}; padding to d=40 deviation {padding:.1e}; {secs:.0}s",
            details.join("; ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_thread_count_determinism() {
    let runs = single_thread_runs();
    let dir = tempfile::tempdir().unwrap();
    run_cli("run-exp1", "exp1.toml", &dir.path().join("exp1"), 4);
    run_cli("run-separation", "separation.toml", &dir.path().join("separation"), 3);
    let pairs = [
        (csv_files(&runs.exp1()), csv_files(&dir.path().join("exp1"))),
        (csv_files(&runs.separation()), csv_files(&dir.path().join("separation"))),
    ];
    let files: usize = pairs.iter().map(|(a, _)| a.len()).sum();
    let pass = pairs.iter().all(|(a, b)| !a.is_empty() && a == b);
    report(10, pass, &format!("{files} CSV files identical at --threads 1 vs 3/4"));
    assert!(pass);
}
