use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdal::experiment;
use mdal::report;
use mdal::transfer;
use mdal::{ExperimentConfig, HarnessError};

/// Multi-domain active learning experiments.
#[derive(Parser)]
#[command(name = "mdal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (composition, strategy, seed) cell of a config.
    Run { config: PathBuf },
    /// Compute cross-domain transfer matrices.
    Transfer { config: PathBuf },
    /// Render figures and the accuracy table for a results directory.
    Report { results: PathBuf },
    /// Check a config without running anything.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::from_path(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.resolve_paths(base);
    if config.output_dir.is_relative() {
        config.output_dir = base.join(&config.output_dir);
    }
    Ok(config)
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config } => {
            let config = load(&config)?;
            let summary = experiment::run_experiment(&config)?;
            let round = *summary.eval_rounds.last().expect("at least one eval round");
            print!("{}", report::table(&summary, round));
            println!("results in {}", config.output_dir.display());
        }
        Command::Transfer { config } => {
            let config = load(&config)?;
            let result = transfer::run_transfer(&config)?;
            print!("{}", transfer::matrix_csv(&result.mean));
            println!(
                "diagonal is the row maximum in {:.1}% of rows",
                100.0 * result.diagonal_max_rate()
            );
        }
        Command::Report { results } => {
            for path in report::emit_report(&results)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            load(&config)?;
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
