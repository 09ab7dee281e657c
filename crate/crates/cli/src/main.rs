use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use immse_cli::{builtin_listing, run, summary_line, write_outputs, ExperimentConfig, EXIT_USAGE};

/// Checks information-estimation identities as described by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "immse-lab", version)]
struct Args {
    /// Experiment config file.
    #[arg(long, required_unless_present = "list_builtins")]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output prefix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prints builtin specs, registered drifts and identity names.
    #[arg(long)]
    list_builtins: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    if args.list_builtins {
        print!("{}", builtin_listing());
        return ExitCode::SUCCESS;
    }
    let path = args.config.expect("required by clap");
    let code = match execute(&path, args.seed, args.out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("immse-lab: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<i32, immse_cli::CliError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.out = o;
    }
    let outcome = run(&config, |r| println!("{}", summary_line(r)))?;
    let (json, csv) = write_outputs(&outcome, &config.out)?;
    eprintln!("wrote {} and {}", json.display(), csv.display());
    Ok(outcome.exit_code())
}
