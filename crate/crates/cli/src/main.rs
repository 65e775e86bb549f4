//! Command-line front end: `exterior-yamabe <command> --config <path>
//! --out <dir> [--jobs K] [--seed S]`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::Command;

#[derive(Debug, Parser)]
#[command(
    name = "exterior-yamabe",
    about = "Curvature classification and prescription on radial asymptotically Euclidean exterior domains",
    version
)]
struct Cli {
    /// Command to run; must match the config's `command` field.
    #[arg(value_enum)]
    command: CliCommand,

    /// Path to the experiment config (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Output directory for report.json and CSV tables.
    #[arg(long)]
    out: PathBuf,

    /// Worker threads for sweep rows.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// Seed override for randomized probes and restarts.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum CliCommand {
    Classify,
    Eigen,
    Yamabe,
    Prescribe,
    Mms,
    Sweep,
    Probe,
}

impl From<CliCommand> for Command {
    fn from(value: CliCommand) -> Self {
        match value {
            CliCommand::Classify => Command::Classify,
            CliCommand::Eigen => Command::Eigen,
            CliCommand::Yamabe => Command::Yamabe,
            CliCommand::Prescribe => Command::Prescribe,
            CliCommand::Mms => Command::Mms,
            CliCommand::Sweep => Command::Sweep,
            CliCommand::Probe => Command::Probe,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = commands::run(
        cli.command.into(),
        &cli.config,
        &cli.out,
        cli.jobs,
        cli.seed,
    );
    ExitCode::from(code as u8)
}
