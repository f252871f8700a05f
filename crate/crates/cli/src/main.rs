use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pathmc_cli::{load_config, run, validate_only, CliError};

/// Multilevel Metropolis path sampler.
#[derive(Debug, Parser)]
#[command(name = "pathmc", version)]
struct Cli {
    /// Run configuration (TOML with dotted section keys).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `chain.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Write paths as a little-endian binary dump.
    #[arg(long)]
    binary: bool,
    /// Check model derivatives and build the ladder without sampling.
    #[arg(long)]
    validate_only: bool,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli.config)?;
    if let Some(dir) = &cli.output_dir {
        config.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.chain.seed = seed;
    }
    config.output.binary |= cli.binary;
    if cli.validate_only {
        print!("{}", validate_only(&config)?);
        return Ok(());
    }
    run(&config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pathmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
