//! `monfer`: run monitored-fermion ensembles and evaluate the analytic flows.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MONFER_WORKERS";

#[derive(Debug)]
pub enum CliError {
    /// Tolerance breach reported by oracle-check.
    Breach(String),
    /// Invalid configuration, unknown observable or boundary mismatch.
    Config(String),
    /// A trajectory aborted.
    Trajectory(String),
    /// Error raised by an analytics routine.
    Analytics(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Breach(_) => 1,
            CliError::Config(_) => 2,
            CliError::Trajectory(_) => 3,
            CliError::Analytics(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Breach(m) | CliError::Config(m) | CliError::Trajectory(m) | CliError::Analytics(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "monfer", version, about = "Monitored lattice fermions: trajectory ensembles and RG analytics")]
#[command(after_help = "Units: J1 = 1. V couples each unordered nearest-neighbour pair once. \
Worker count: MONFER_WORKERS. Exit codes: 0 ok, 1 oracle tolerance breach, 2 invalid input, \
3 trajectory abort, 4 analytics failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trajectory ensemble and write the summary CSV or trajectory log.
    Simulate(commands::SimulateArgs),
    /// Integrate the one-loop flow of the free or interacting theory.
    Rg(commands::RgArgs),
    /// Integrate the BKT flow and classify the initial condition.
    Bkt(commands::BktArgs),
    /// Evaluate the Hartree-Fock mass integral.
    Yhf(commands::YhfArgs),
    /// Solve for the sine-Gordon domain wall and its action.
    Kink(commands::KinkArgs),
    /// Critical interaction V_c(gamma) on a grid of measurement rates.
    PhaseDiagram(commands::PhaseDiagramArgs),
    /// Coupling g(q) and its weak-localization correction from stored runs.
    Correlator(commands::CorrelatorArgs),
    /// Compare the engines against the exact many-body reference.
    OracleCheck(commands::OracleArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::init_workers().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Rg(a) => commands::rg(a),
        Command::Bkt(a) => commands::bkt(a),
        Command::Yhf(a) => commands::yhf(a),
        Command::Kink(a) => commands::kink(a),
        Command::PhaseDiagram(a) => commands::phase_diagram(a),
        Command::Correlator(a) => commands::correlator(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("monfer: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
