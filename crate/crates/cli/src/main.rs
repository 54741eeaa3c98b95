use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pvi_cli::{emit_table, init_thread_pool, run_config_file, CliError, ExperimentConfig, TableKind};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pvi", version, about = "Penalized constrained BSDE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its artifacts and manifest.
    Run { config: PathBuf },
    /// Print a report as CSV.
    Table {
        report: PathBuf,
        #[arg(long, value_enum)]
        kind: TableKind,
    },
    /// Check a config against the schema without running it.
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            init_thread_pool()?;
            let (out, manifest) = run_config_file(&config)?;
            let summary = json!({
                "status": "ok",
                "output_dir": out.display().to_string(),
                "artifacts": manifest.artifacts.len(),
            });
            println!("{summary}");
        }
        Command::Table { report, kind } => {
            print!("{}", emit_table(&report, kind)?);
        }
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?;
            println!("{}", json!({"status": "ok"}));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
