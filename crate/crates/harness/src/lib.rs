//! Configuration-driven runners for the hiernet experiment suites.
//!
//! Every suite returns its tables in memory ([`SuiteOutput`]) so callers can
//! compare or write them; [`output::write_suite`] puts them on disk next to a
//! metadata file that holds everything timing-dependent.

pub mod cli;
pub mod config;
pub mod error;
pub mod exp;
pub mod fourier;
pub mod gradcheck;
pub mod hermite;
pub mod mincomplexity;
pub mod output;
pub mod separation;

pub use config::{ExperimentConfig, Suite};
pub use error::{HarnessError, Result};
pub use output::SuiteOutput;

/// Runs `cfg` on a pool of `threads` workers (`0` for one per core).
/// The tables do not depend on `threads`.
pub fn run_suite(cfg: &ExperimentConfig, threads: usize) -> Result<SuiteOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match cfg.suite {
        Suite::Exp1 => exp::run_exp1(cfg),
        Suite::Exp2 => exp::run_exp2(cfg),
        Suite::Mincomplexity => mincomplexity::run_mincomplexity(cfg),
        Suite::Separation => separation::run_separation(cfg),
        Suite::HermiteVerify => hermite::run_hermite(cfg),
    })
}
