use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod output;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "blowup", version, about = "Blow-up profile simulation and verification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat key = value configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set p=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory from (d0, d1).
    Simulate(Common),
    /// Search for the initial data that stays in the shrinking set.
    Shoot(Common),
    /// Evaluate the profile bounds on a stored or fresh trajectory.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Directory holding trajectory.csv and fields.csv from a previous run.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Semigroup and Feynman–Kac checks.
    Kernel(Common),
    /// Physical-variable heat semigroup and Duhamel comparisons.
    Oracle(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::Shoot(c) => commands::shoot(&c),
        Command::Verify { common, from } => commands::verify(&common, from.as_deref()),
        Command::Kernel(c) => commands::kernel(&c),
        Command::Oracle(c) => commands::oracle(&c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class.name(), e.message);
            ExitCode::from(e.class.code() as u8)
        }
    }
}
