use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use pass_sim::{load_scenario, run_array_gain, run_min_power, write_atomic, RunError};

#[derive(Parser)]
#[command(
    name = "pass-sim",
    version,
    about = "Simulation studies for pinching-antenna systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a scenario file, printing the normalized form.
    Validate {
        /// Path to the scenario TOML file.
        scenario: PathBuf,
    },
    /// Array gain versus the number of antennas, written as CSV.
    ArrayGain {
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path, written atomically.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Minimum transmit power versus the SINR target, written as CSV.
    MinPower {
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path, written atomically.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Validate { scenario } => {
            let loaded = load_scenario(&scenario)?;
            print!("{}", loaded.to_toml());
            Ok(())
        }
        Command::ArrayGain {
            scenario,
            out,
            seed,
        } => {
            let mut loaded = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                loaded.seed = seed;
            }
            let csv = run_array_gain(&loaded)?;
            write_atomic(&out, &csv)
        }
        Command::MinPower {
            scenario,
            out,
            seed,
        } => {
            let mut loaded = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                loaded.seed = seed;
            }
            let csv = run_min_power(&loaded)?;
            write_atomic(&out, &csv)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout and usage errors to
            // stderr; only the former count as success.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
