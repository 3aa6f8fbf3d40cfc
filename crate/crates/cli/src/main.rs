//! `tvlds` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 solver non-convergence under `--strict`.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use config::Params;

const VERSION: &str = env!("CARGO_PKG_VERSION");
const FAILED_MARKER: &str = ".failed";
const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Parser)]
#[command(name = "tvlds", version, about = "Joint identification of linear dynamical systems on a graph")]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph, ground-truth systems and simulated trajectories.
    Simulate(Common),
    /// Fit one method to a panel, at a fixed λ or along a validated path.
    Fit(Common),
    /// Run a synthetic sweep and write per-run and aggregate tables.
    Sweep(Common),
    /// Evaluate the error-bound ingredients and conditions on an instance.
    Theory(Common),
    /// Preprocess station data into a panel and a nearest-neighbour graph.
    Ingest(Common),
    /// Re-run the sweeps over T and over m behind the ordering checks.
    Reproduce(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file of key = value settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set n_rep=3`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat solver non-convergence as fatal (exit code 3).
    #[arg(long)]
    strict: bool,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::NotConverged(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Data(m) => write!(f, "data: {m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<tvlds::Error> for Failure {
    fn from(e: tvlds::Error) -> Self {
        match e {
            tvlds::Error::InvalidArgument(_) | tvlds::Error::InvalidGraph(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot set up {n} worker threads: {e}")))?;
    }
    let (name, common): (&'static str, Common) = match cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Fit(c) => ("fit", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Theory(c) => ("theory", c),
        Command::Ingest(c) => ("ingest", c),
        Command::Reproduce(c) => ("reproduce", c),
    };
    let mut flags = Vec::new();
    if let Some(s) = common.seed {
        let s = i64::try_from(s).map_err(|_| Failure::Usage("--seed must fit in a signed 64-bit integer".into()))?;
        flags.push(("seed", Value::Integer(s)));
    }
    let params = Params::resolve(name, commands::schema(name), common.config.as_deref(), &common.sets, &flags)?;
    let out = common.out.unwrap_or_else(|| Path::new("out").join(name));
    prepare_out(&out, &params)?;
    let result = commands::run(&params, &out, common.strict);
    if let Err(f) = &result {
        let _ = tvlds::io::write_atomic(&out.join(FAILED_MARKER), format!("{f}\n").as_bytes());
    }
    result
}

/// Creates the output directory, records the resolved configuration and
/// clears a marker left by an earlier failed run.
fn prepare_out(out: &Path, params: &Params) -> Result<(), Failure> {
    let fail = |e: tvlds::Error| Failure::Data(format!("{}: {e}", out.display()));
    tvlds::io::write_atomic(&out.join(RESOLVED_CONFIG), params.to_toml(VERSION).as_bytes()).map_err(fail)?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| fail(e.into()))?;
    }
    Ok(())
}
