use std::process::ExitCode;

use clap::Parser;
use ri_onset_cli::{commands, with_workers, Command, RunConfig, Settings};

/// First-hitting-time experiments for the stochastic MSD cyclone model.
#[derive(Parser)]
#[command(name = "ri-onset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(cli.command, cli.settings)
        .and_then(|cfg| with_workers(|| commands::run(&cfg)).and_then(|r| r));
    match result {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ri-onset: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
