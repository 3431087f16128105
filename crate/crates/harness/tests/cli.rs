use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hiernet_harness::exp::EXP1_COLUMNS;
use hiernet_harness::output::check_schema;
use hiernet_harness::separation::KERNEL_COLUMNS;
use hiernet_harness::{run_suite, ExperimentConfig};
use serde_json::Value;

fn hiernet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiernet")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const EXP1_SMOKE: &str = r#"
suite = "exp1"
seeds = [1]

[exp1]
n_train = 50
n_test = 100
widths = [20]

[exp1.training]
epochs = 1

[[exp1.algorithms]]
tag = "3resnet(hidden)"
lr = 0.1
weight_decay = 0.0

[[exp1.algorithms]]
tag = "last"
lr = 0.01
weight_decay = 0.0

[[exp1.algorithms]]
tag = "NTK"
lr = 0.01
weight_decay = 0.0
"#;

const SEPARATION_SMALL: &str = r#"
suite = "separation"
seeds = [1, 2]

[separation]
d = 6
d1 = 6
k = 2
anchors = 8
ridge = 1e-8
kernel = { kind = "gaussian", h = 1.0 }
"#;

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(hiernet(&["bogus"]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let out = hiernet(&["run-exp1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn mismatched_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sep.toml", SEPARATION_SMALL);
    assert_eq!(hiernet(&["run-exp1", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "suite = \"exp1\"\nseeds = [1, 1]\n");
    assert_eq!(hiernet(&["run-exp1", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp1.toml", EXP1_SMOKE);
    let out = dir.path().join("out");
    let res = hiernet(&[
        "run-exp1",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--dry-run",
    ]);
    assert_eq!(res.status.code(), Some(0));
    assert!(!out.exists());
}

#[test]
fn checked_in_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap().validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn exp1_smoke_writes_one_row_per_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp1.toml", EXP1_SMOKE);
    let out = dir.path().join("out");
    let res = hiernet(&[
        "run-exp1",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for slug in ["3resnet-hidden", "last", "ntk"] {
        let text = fs::read_to_string(out.join(format!("exp1_{slug}.csv"))).unwrap();
        assert_eq!(check_schema(&text, EXP1_COLUMNS).unwrap(), 1, "{slug}");
    }
    let meta: Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    let threshold = meta["summary"]["threshold"].as_f64().unwrap();
    assert!((threshold - 1.35).abs() < 1e-12);
    assert_eq!(meta["threads"], 1);
    assert_eq!(meta["seeds"], serde_json::json!([1]));
}

#[test]
fn seeds_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sep.toml", SEPARATION_SMALL);
    let out = dir.path().join("out");
    let res = hiernet(&[
        "run-separation",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "7",
    ]);
    assert_eq!(res.status.code(), Some(0));
    let text = fs::read_to_string(out.join("separation_kernel.csv")).unwrap();
    assert_eq!(check_schema(&text, KERNEL_COLUMNS).unwrap(), 15);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("7")));
}

#[test]
fn no_anchors_means_nothing_below_the_floor() {
    let mut cfg = ExperimentConfig::from_toml(SEPARATION_SMALL).unwrap();
    cfg.separation.as_mut().unwrap().anchors = 0;
    let out = run_suite(&cfg, 1).unwrap();
    for report in out.summary["reports"].as_array().unwrap() {
        assert_eq!(report["fraction_below"], 0.0);
    }
}

#[test]
fn tables_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig::from_toml(SEPARATION_SMALL).unwrap();
    let one = run_suite(&cfg, 1).unwrap();
    let two = run_suite(&cfg, 2).unwrap();
    assert_eq!(one.tables.len(), two.tables.len());
    for (a, b) in one.tables.iter().zip(&two.tables) {
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }
}

#[test]
fn gradcheck_and_fourier_commands_pass() {
    assert_eq!(hiernet(&["gradcheck", "--models", "5"]).status.code(), Some(0));
    assert_eq!(
        hiernet(&["fourier", "--d", "8", "--functions", "10"]).status.code(),
        Some(0)
    );
}

#[test]
fn fourier_spectrum_of_a_character() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<&str> = (0..8u32)
        .map(|x| if (x & 0b011).count_ones() % 2 == 0 { "1" } else { "-1" })
        .collect();
    let input = write(dir.path(), "f.txt", &values.join("\n"));
    let out = dir.path().join("out");
    let res = hiernet(&["fourier", "--values", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = fs::read_to_string(out.join("fourier.csv")).unwrap();
    assert!(text.lines().any(|l| l == "0 1,1"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",0")).count(), 7);
}
