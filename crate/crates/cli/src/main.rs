use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbeam_cli::Command;

#[derive(Parser)]
#[command(name = "tbeam", version, about = "Damped Timoshenko beam experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Io {
    /// Experiment file with `key=value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time-domain run: trajectory.csv and summary.txt.
    Simulate(Io),
    /// Penalty parameter sweep over `sweep.eps_pen`.
    SweepEps(Io),
    /// Damper location study over `sweep.xi` and `sweep.ne`.
    SweepXi(Io),
    /// Eigenvalues of the semi-discrete generator.
    Spectrum(Io),
    /// Boundary observability functionals along a run.
    Observability(Io),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, io) = match cli.command {
        Cmd::Simulate(io) => (Command::Simulate, io),
        Cmd::SweepEps(io) => (Command::SweepEps, io),
        Cmd::SweepXi(io) => (Command::SweepXi, io),
        Cmd::Spectrum(io) => (Command::Spectrum, io),
        Cmd::Observability(io) => (Command::Observability, io),
    };
    match tbeam_cli::run(command, &io.config, &io.out) {
        Ok(summary) => {
            print!("{}", summary.render());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tbeam: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
