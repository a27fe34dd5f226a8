//! `polylab`: config-driven experiment runner over `polymer_core`.
//!
//! Each subcommand reads a flat `key = value` config, validates it against a
//! schema, runs one experiment and writes `<command>-<hash>.json` (and a CSV
//! table when there is one) into the output directory. Exit codes: 0 on
//! success, 2 when the statistical verdict is inconclusive, 1 on errors.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

pub use artifact::{Artifact, Estimate, Table};
pub use config::{Config, ConfigErrors};

#[derive(Debug, Parser)]
#[command(name = "polylab", version, about = "Numerical lab for stretched polymers in random potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Config file; keys left out take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a potential field.
    Env(RunArgs),
    /// Fixed-length partition functions and endpoint laws.
    Partition(RunArgs),
    /// Lyapunov exponents over a direction fan.
    Lyapunov(RunArgs),
    /// Cone-point densities or skeleton surcharge tails.
    Decompose(RunArgs),
    /// Renewal limit of an irreducible step law.
    Renewal(RunArgs),
    /// Annealed LLN, CLT and local limit checks.
    Clt(RunArgs),
    /// Quenched/annealed ratio, concentration, expansion or LLN diagnostics.
    Disorder(RunArgs),
    /// Fractional moments with the tilt diagnostic.
    Fracmoment(RunArgs),
    /// Merge run artifacts.
    Report {
        /// Artifact files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Env(_) => "env",
            Command::Partition(_) => "partition",
            Command::Lyapunov(_) => "lyapunov",
            Command::Decompose(_) => "decompose",
            Command::Renewal(_) => "renewal",
            Command::Clt(_) => "clt",
            Command::Disorder(_) => "disorder",
            Command::Fracmoment(_) => "fracmoment",
            Command::Report { .. } => "report",
        }
    }

    fn run_args(&self) -> Option<&RunArgs> {
        match self {
            Command::Env(a)
            | Command::Partition(a)
            | Command::Lyapunov(a)
            | Command::Decompose(a)
            | Command::Renewal(a)
            | Command::Clt(a)
            | Command::Disorder(a)
            | Command::Fracmoment(a) => Some(a),
            Command::Report { .. } => None,
        }
    }
}

/// Outcome of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub artifact: Option<Artifact>,
}

/// Parses and runs an experiment in a pool of `workers` threads, without
/// writing anything.
pub fn run_config(command: &str, text: &str, seed: Option<u64>, workers: usize) -> Result<Artifact> {
    let cfg = Config::parse(command, text, seed)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(|| commands::run(&cfg))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    if let Command::Report { inputs, out } = &cli.command {
        let r = report::build(inputs)?;
        let files = report::write(&r, out)?;
        print!("{}", report::summary(&r));
        return Ok(Outcome { code: 0, files, artifact: None });
    }
    let args = cli.command.run_args().unwrap();
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let art = run_config(cli.command.name(), &text, args.seed, args.workers)?;
    let files = art.write(&args.out)?;
    let code = if art.inconclusive { 2 } else { 0 };
    Ok(Outcome { code, files, artifact: Some(art) })
}

/// Runs `polylab` on `argv` and returns the exit code; errors go to stderr.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if let Some(v) = o.artifact.as_ref().and_then(|a| a.verdict.as_ref()) {
                println!("verdict: {v}");
            }
            o.code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
