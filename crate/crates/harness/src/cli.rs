//! `hiernet` command line.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Suite};
use crate::error::{HarnessError, Result};
use crate::fourier::{parseval_check, read_values, spectrum_table};
use crate::gradcheck::gradient_check;
use crate::output::write_suite;
use crate::run_suite;

#[derive(Debug, Parser)]
#[command(
    name = "hiernet",
    version,
    about = "Experiment runner for hierarchical-target learners"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds; override the config.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads, 0 for one per core. Never changes any result.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Validate the config and stop without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    RunExp1,
    RunExp2,
    RunMincomplexity,
    RunSeparation,
    VerifyHermite,
    /// Finite-difference check of the resnet gradients.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        models: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Parseval self-check on random cube functions, or the spectrum of `--values`.
    Fourier {
        /// File with `2^d` values, one per line.
        #[arg(long)]
        values: Option<PathBuf>,
        #[arg(long, default_value_t = 12)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        functions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

impl Command {
    fn suite(&self) -> Option<Suite> {
        match self {
            Command::RunExp1 => Some(Suite::Exp1),
            Command::RunExp2 => Some(Suite::Exp2),
            Command::RunMincomplexity => Some(Suite::Mincomplexity),
            Command::RunSeparation => Some(Suite::Separation),
            Command::VerifyHermite => Some(Suite::HermiteVerify),
            Command::Gradcheck { .. } | Command::Fourier { .. } => None,
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config for a suite command and applies the command-line overrides.
pub fn load_config(common: &Common, suite: Suite) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Config(format!("{} needs --config <path>", suite.name())))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.suite != suite {
        return Err(HarnessError::Config(format!(
            "{} holds a {} config, not {}",
            path.display(),
            cfg.suite.name(),
            suite.name()
        )));
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32> {
    let common = &cli.common;
    if let Some(suite) = cli.command.suite() {
        let cfg = load_config(common, suite)?;
        if common.dry_run {
            println!("{}: config is valid", suite.name());
            return Ok(0);
        }
        let started = SystemTime::now();
        let clock = Instant::now();
        let output = run_suite(&cfg, common.threads)?;
        let dir = cfg.out_dir();
        for path in write_suite(
            &dir,
            &cfg,
            &output,
            common.threads,
            started,
            clock.elapsed().as_secs_f64(),
        )? {
            println!("wrote {}", path.display());
        }
        if !output.required_diverged.is_empty() {
            return Err(HarnessError::RequiredRunDiverged(output.required_diverged.join("; ")));
        }
        return Ok(0);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    match &cli.command {
        Command::Gradcheck { models, seed } => {
            if common.dry_run {
                return Ok(0);
            }
            let report = pool.install(|| gradient_check(*models, *seed))?;
            println!(
                "gradcheck: {} models, {} coordinates, max relative error {:e} ({} of model {}, index {})",
                report.models,
                report.coordinates,
                report.max_relative_error,
                report.worst.1,
                report.worst.0,
                report.worst.2
            );
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Fourier {
            values,
            d,
            functions,
            seed,
        } => {
            if common.dry_run {
                return Ok(0);
            }
            match values {
                Some(path) => {
                    let f = read_values(path)?;
                    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("results/fourier"));
                    std::fs::create_dir_all(&dir)?;
                    let table = spectrum_table(&f);
                    let path = dir.join(&table.file);
                    std::fs::write(&path, table.to_csv()?)?;
                    println!("wrote {}", path.display());
                    Ok(0)
                }
                None => {
                    let check = pool.install(|| parseval_check(*d, *functions, *seed))?;
                    println!(
                        "fourier: d={} functions={} max parseval error {:e}",
                        check.d, check.functions, check.max_parseval_error
                    );
                    if let Some(gap) = check.max_naive_gap {
                        println!("fourier: max gap to the naive transform {gap:e}");
                    }
                    Ok(if check.max_parseval_error <= 1e-10 { 0 } else { 1 })
                }
            }
        }
        _ => unreachable!("suite commands return above"),
    }
}
