//! `rootlab` command-line front end.

mod config;
mod run;
mod sweep;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::run::Command;

pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Verification(String),
    NonConvergence(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Verification(_) => EXIT_VERIFICATION,
            Failure::NonConvergence(_) => EXIT_NON_CONVERGENCE,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::NonConvergence(m) => write!(f, "no convergence: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "rootlab", version, about = "Zero roots and Bethe roots of the open XXX chain")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON run configuration (or a previous run_manifest.json).
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Ground state and its energy; DMRG runs also write an MPS checkpoint.
    Ground(Common),
    /// Zero roots of the transfer-matrix eigenvalue.
    Zeroroots(Common),
    /// Bethe roots from the T-Q relation.
    Betheroots(Common),
    /// One run per value of `sweep_key`, plus an aggregate CSV.
    Sweep(Common),
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ROOTLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("ROOTLAB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.into()))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let (cmd, common) = match cli.command {
        Sub::Ground(c) => (Some(Command::Ground), c),
        Sub::Zeroroots(c) => (Some(Command::ZeroRoots), c),
        Sub::Betheroots(c) => (Some(Command::BetheRoots), c),
        Sub::Sweep(c) => (None, c),
    };
    let cfg = RunConfig::load(&common.config, &common.set)?;
    match cmd {
        Some(cmd) => run::execute(cmd, &cfg).1,
        None => sweep::run_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rootlab: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
