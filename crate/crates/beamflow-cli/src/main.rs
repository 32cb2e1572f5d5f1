//! beamflow: scenario runs, target-pattern generation, gradient checking,
//! and plot-ready data extraction for the two time-scale beamforming
//! simulator.
//!
//! Exit codes are a stable contract: 0 success, 1 validation error,
//! 2 I/O error, 3 gradient-check failure.

mod check;
mod config;
mod error;
mod generate;
mod io;
mod plot;
mod run;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "beamflow",
    version,
    about = "Distributed transmit beamforming under two time-scale gradient flows",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a fictitious-array target pattern as rho,theta,magnitude CSV.
    GeneratePattern(generate::GenerateArgs),
    /// Integrate a scenario; write trajectory, patterns, and a summary.
    Run(run::RunArgs),
    /// Compare analytic gradients against finite differences.
    CheckGradients(check::CheckArgs),
    /// Reshape run outputs into polar-plot and evolution CSVs.
    PlotData(plot::PlotArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            // Usage problems are validation errors under the exit-code
            // contract, not clap's default exit 2.
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let result = match &cli.command {
        Command::GeneratePattern(args) => generate::run(args),
        Command::Run(args) => run::run(args),
        Command::CheckGradients(args) => check::run(args),
        Command::PlotData(args) => plot::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
