//! Command-line front end: `twostop solve|simulate|compare|sweep`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 no convergence, 4 missing
//! artifact, 1 anything else.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
pub use commands::{cmd_compare, cmd_simulate, cmd_solve, cmd_sweep};
pub use config::{Format, PolicySource, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "twostop", version, about = "Switch-then-stop optimal stopping: solver and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed (overrides `simulation.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Format of summaries and tables (overrides `output.format`).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve both stages and write value fields, policies and a summary.
    Solve(Common),
    /// Estimate a policy's value by Monte Carlo.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Policy source (overrides `simulation.policy`).
        #[arg(long, value_enum)]
        policy: Option<PolicySource>,
    },
    /// Compare solver value, Monte Carlo, perturbed policies and finite-K values.
    Compare(Common),
    /// Solve once per value of one numeric config parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted parameter path (overrides `sweep.parameter`).
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values (overrides `sweep.values`).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Option<Vec<f64>>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c) | Command::Compare(c) => c,
            Command::Simulate { common, .. } | Command::Sweep { common, .. } => common,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Domain(_) | Error::Config(_) | Error::Unsupported(_) => 2,
        Error::Convergence { .. } => 3,
        Error::MissingArtifact(_) => 4,
        Error::Numeric(_) | Error::FieldFormat(_) | Error::Io(_) => 1,
    }
}

fn load(common: &Common) -> crate::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(format) = common.format {
        cfg.output.format = format;
    }
    Ok(cfg)
}

/// Run a parsed command; returns the path of the main artifact.
pub fn run(cli: &Cli) -> crate::Result<PathBuf> {
    let mut cfg = load(cli.command.common())?;
    match &cli.command {
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Simulate { policy, .. } => {
            if let Some(p) = policy {
                cfg.simulation.policy = *p;
            }
            cmd_simulate(&cfg)
        }
        Command::Compare(_) => cmd_compare(&cfg),
        Command::Sweep { param, values, .. } => {
            let sweep = cfg.sweep.clone();
            let param = param
                .clone()
                .or_else(|| sweep.as_ref().map(|s| s.parameter.clone()))
                .ok_or_else(|| Error::Config("sweep needs `--param` or a [sweep] table".into()))?;
            let values = values
                .clone()
                .or_else(|| sweep.map(|s| s.values))
                .unwrap_or_default();
            cmd_sweep(&cfg, &param, &values)
        }
    }
}

/// Entry point for the binary: parse arguments, run, report, exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.command.common().threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(err) => {
            match &err {
                Error::Validation(diags) => {
                    for d in diags {
                        eprintln!("{d}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            exit_code(&err)
        }
    }
}
