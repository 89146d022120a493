//! `plateau`: solve, verify, dualize and sweep constant-curvature graphs in
//! hyperbolic space.
//!
//! Exit codes: 0 pass, 1 solver failure, 2 scorecard failure, 64 usage or
//! configuration error.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{OracleArgs, Status, StoredArgs, SweepArgs};
use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "plateau", version, about = "Asymptotic Plateau solver for convex constant-curvature graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance; writes solution.csv, report.json, scorecard.json
    /// and convergence.log.
    Solve(RunArgs),
    /// Re-run the scorecard on a stored solution.csv.
    Verify(StoredArgs),
    /// Transport a stored solution to de Sitter space (desitter.csv).
    Dualize(StoredArgs),
    /// Compare against the exact spherical cap across grid levels.
    Oracle(OracleArgs),
    /// Independent solves over a list of σ or θ values.
    Sweep(SweepArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { Status::Usage as u8 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Verify(a) => commands::verify_stored(a),
        Command::Dualize(a) => commands::dualize(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    let status = match result {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    };
    ExitCode::from(status as u8)
}
