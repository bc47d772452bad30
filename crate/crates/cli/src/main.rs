use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rn_anomaly_cli::{cmd_run, cmd_validate, CliError, Overrides};

#[derive(Parser)]
#[command(name = "rnad", version, about = "RN-corrected anomaly detection runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run config and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed, overriding `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a run config without side effects; prints diagnostics as JSON.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, &Overrides { out, seed }).map(|summary| {
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
        }),
        Command::Validate { config } => match cmd_validate(&config) {
            Ok(diags) => {
                println!("{}", serde_json::to_string_pretty(&diags).expect("serializable"));
                if diags.is_empty() {
                    Ok(())
                } else {
                    return ExitCode::from(2);
                }
            }
            Err(e) => Err(CliError::Runtime(e)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
