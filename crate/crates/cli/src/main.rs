use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use mhd_cli::{run_experiment, CliError, Experiment, RunConfig};

/// Structure-preserving incompressible MHD experiments.
#[derive(Parser, Debug)]
#[command(name = "mhd", version)]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// `--key value` pairs that override the file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn run(args: Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = RunConfig::resolve(args.experiment, &text, &args.overrides)?;
    let outcome = run_experiment(&cfg)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    match outcome.failure {
        Some(msg) => Err(CliError::Step(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
