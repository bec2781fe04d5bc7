use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graphbandit::cli::{
    compare_runs, decomposition_report, load_config, resolve, run_experiment, CliError,
};

#[derive(Parser)]
#[command(
    name = "graphbandit",
    version,
    about = "Seeded regret simulator for contextual bandits with decomposable payoffs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write artifacts to its output directory.
    Run {
        config: PathBuf,
        /// Override the config's seed list (comma-separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate and resolve the config, run nothing.
        #[arg(long)]
        validate_only: bool,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Compare two finished run directories through their manifests.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
    /// Print the action-subgraph tree decomposition for a config.
    Decompose { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seeds, out, validate_only } => {
            let dir = config_dir(&config);
            let mut parsed = load_config(&config)?;
            if let Some(seeds) = seeds {
                parsed.seeds = seeds;
            }
            if let Some(out) = out {
                parsed.output_dir = out;
            }
            let resolved = resolve(&parsed, &dir)?;
            if validate_only {
                println!("ok: config is valid");
                return Ok(());
            }
            let artifacts = run_experiment(&resolved)?;
            println!(
                "wrote {} seed file(s) to {}",
                artifacts.manifest.seeds.len(),
                artifacts.output_dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let dir = config_dir(&config);
            let parsed = load_config(&config)?;
            resolve(&parsed, &dir)?;
            println!("ok: config is valid");
            Ok(())
        }
        Command::Compare { dir_a, dir_b } => {
            let report = compare_runs(&dir_a, &dir_b)?;
            print!("{report}");
            Ok(())
        }
        Command::Decompose { config } => {
            let dir = config_dir(&config);
            let parsed = load_config(&config)?;
            let resolved = resolve(&parsed, &dir)?;
            print!("{}", decomposition_report(&resolved.model, &resolved.decomposition));
            Ok(())
        }
    }
}

fn config_dir(config: &std::path::Path) -> PathBuf {
    config.parent().map_or_else(|| PathBuf::from("."), PathBuf::from)
}
