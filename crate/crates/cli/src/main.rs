//! `intervene`: design, sweep, simulate and verify intervention rules.
//!
//! Exit codes: 0 success, 1 validation error, 2 no feasible rule,
//! 3 verification failure, 4 I/O error.

mod commands;
mod config;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{RunArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "intervene",
    version,
    about = "Intervention rules for slotted random access under imperfect monitoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal intervention rule for one test period
    Design(RunArgs),
    /// Optimal throughput for every test period 1..=T
    Sweep(RunArgs),
    /// Monte Carlo check of a rule against the analytic payoffs
    Simulate(RunArgs),
    /// Cross-check the closed form against the LP oracle and structural properties
    Verify(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Validation = 1,
    Infeasible = 2,
    VerificationFailed = 3,
    Io = 4,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Infeasible(String),
    Internal(String),
    Io(String),
}

impl CliError {
    fn from_domain(err: intervention::Error) -> Self {
        match err {
            intervention::Error::Inconsistent(_) => Self::Internal(err.to_string()),
            intervention::Error::NoFeasiblePeriod => Self::Infeasible(err.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }

    fn status(&self) -> Status {
        match self {
            Self::Validation(_) => Status::Validation,
            Self::Infeasible(_) => Status::Infeasible,
            Self::Internal(_) => Status::VerificationFailed,
            Self::Io(_) => Status::Io,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid input: {m}"),
            Self::Infeasible(m) => write!(f, "infeasible: {m}"),
            Self::Internal(m) => write!(f, "internal error: {m}"),
            Self::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

type Handler = fn(&RunConfig) -> Result<commands::CommandOutput, CliError>;

fn run(cli: Cli) -> Result<Status, CliError> {
    let (args, handler): (RunArgs, Handler) = match cli.command {
        Command::Design(a) => (a, commands::design),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Verify(a) => (a, commands::verify),
    };
    let cfg = RunConfig::resolve(args)?;
    if !cfg.params.is_canonical(intervention::DEFAULT_TOL) {
        eprintln!(
            "warning: p_low={} differs from 1/N={}",
            cfg.params.p_low(),
            1.0 / cfg.params.n_users() as f64
        );
    }
    let out = handler(&cfg)?;
    match &cfg.output {
        Some(path) => fs::write(path, &out.body)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?,
        None => io::stdout()
            .lock()
            .write_all(out.body.as_bytes())
            .map_err(|e| CliError::Io(format!("writing stdout: {e}")))?,
    }
    if out.status == Status::Infeasible {
        eprintln!(
            "no intervention rule satisfies the incentive constraint; reported the Nash fallback"
        );
    }
    Ok(out.status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Status::Validation as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.status() as u8)
        }
    }
}
