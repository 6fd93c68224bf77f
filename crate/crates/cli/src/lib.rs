//! The `otlab` command line: argument parsing, commands and report output.
//!
//! Every command produces a JSON report on stdout. Failures exit with code 2
//! (bad input, unsupported request, I/O) or 3 (solver non-convergence).

pub mod bound;
pub mod cheat;
pub mod data;
pub mod output;
pub mod sdp;
pub mod simulate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use otlab_core::model::Party;
use otlab_core::otcore::trial_rng;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(
    name = "otlab",
    version,
    about = "Simulate and bound quantum oblivious transfer and coin flipping"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed; trial `t` draws from a stream derived from `(seed, t)`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo trials (0 skips sampling).
    #[arg(long, global = true, default_value_t = 10_000)]
    pub trials: u64,
    /// SDP solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// SDP solver iteration cap.
    #[arg(long, global = true, default_value_t = 100)]
    pub max_iterations: usize,
    /// Also print a table of numeric results to stderr.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Write numeric results as `path,value` rows to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Leave timing and thread count out of the report.
    #[arg(long, global = true)]
    pub no_meta: bool,
    /// Worker threads for sampling loops (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Cross-check SDP optima with the parameterized-strategy search.
    #[arg(long, global = true)]
    pub oracle: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Honest execution: exact outcome distribution and sampled runs.
    Simulate(simulate::SimulateArgs),
    /// Run a cheating strategy and report lower and upper bounds.
    Cheat(cheat::CheatArgs),
    /// Evaluate closed-form bounds.
    Bound(bound::BoundArgs),
    /// Build and solve cheating SDPs for a protocol spec.
    Sdp(sdp::SdpArgs),
    /// Regenerate the bundled protocol specs.
    GenData(data::GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartyArg {
    Alice,
    Bob,
}

impl From<PartyArg> for Party {
    fn from(p: PartyArg) -> Party {
        match p {
            PartyArg::Alice => Party::Alice,
            PartyArg::Bob => Party::Bob,
        }
    }
}

/// A failed command and its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
    pub detail: Option<Value>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
            detail: None,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<otlab_core::Error> for CliError {
    fn from(e: otlab_core::Error) -> Self {
        let message = e.to_string();
        match e {
            otlab_core::Error::Convergence {
                iterations,
                primal_residual,
                dual_residual,
                gap,
            } => CliError {
                code: 3,
                message,
                detail: Some(json!({
                    "iterations": iterations,
                    "residuals": { "primal": primal_residual, "dual": dual_residual, "gap": gap },
                })),
            },
            _ => CliError::usage(message),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::usage(format!("json error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::usage(format!("csv error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct Meta {
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

/// The JSON document printed on stdout.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: Vec<String>,
    pub seed: u64,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

pub fn versions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("otlab-cli", env!("CARGO_PKG_VERSION")),
        ("otlab-core", otlab_core::VERSION),
    ])
}

/// Runs a parsed command line. `argv` is echoed into the report.
pub fn execute(cli: &Cli, argv: &[String]) -> CliResult<Report> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let g = &cli.global;
    let results = pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate::run(a, g),
        Command::Cheat(a) => cheat::run(a, g),
        Command::Bound(a) => bound::run(a),
        Command::Sdp(a) => sdp::run(a, g),
        Command::GenData(a) => data::run(a),
    })?;
    let meta = (!g.no_meta).then(|| Meta {
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        threads: pool.current_num_threads(),
    });
    let report = Report {
        command: argv.to_vec(),
        seed: g.seed,
        versions: versions(),
        results,
        meta,
    };
    if let Some(path) = &g.csv {
        output::write_csv(path, &report.results)?;
    }
    if g.pretty {
        eprint!("{}", output::table(&report.results));
    }
    Ok(report)
}

/// Runs `trials` independent trials in parallel. Trial `t` always sees the
/// same random stream, so results do not depend on the thread count.
pub fn par_trials<T: Send>(
    seed: u64,
    trials: u64,
    f: impl Fn(&mut dyn RngCore) -> otlab_core::Result<T> + Sync,
) -> CliResult<Vec<T>> {
    Ok((0..trials)
        .into_par_iter()
        .map(|t| f(&mut trial_rng(seed, t)))
        .collect::<otlab_core::Result<Vec<T>>>()?)
}

/// Number of successful trials.
pub fn par_successes(
    seed: u64,
    trials: u64,
    f: impl Fn(&mut dyn RngCore) -> otlab_core::Result<bool> + Sync,
) -> CliResult<u64> {
    Ok(par_trials(seed, trials, f)?
        .into_iter()
        .filter(|&s| s)
        .count() as u64)
}

impl Global {
    pub fn solver(&self) -> otlab_core::sdp::SolverOptions {
        otlab_core::sdp::SolverOptions {
            tol: self.tol,
            max_iterations: self.max_iterations,
            random_start: None,
        }
    }
}

pub fn to_value(v: impl Serialize) -> CliResult<Value> {
    Ok(serde_json::to_value(v)?)
}
