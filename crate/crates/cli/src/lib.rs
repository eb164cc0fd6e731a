//! Command-line front end of the forecasting benchmark.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use qforecast_core::datagen::{generate, GeneratorSpec};
use qforecast_core::{Error, Result};

pub use config::{Experiment, ExperimentConfig, Overrides, OUTPUT_ROOT_ENV};
pub use report::{cmd_hpo_plot, cmd_report};
pub use run::{cmd_run, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for an error category.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        Error::Config(_) | Error::Data(_) | Error::Csv(_) => EXIT_DATA,
        Error::Runtime(_) | Error::Diverged(_) | Error::Io(_) => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qforecast",
    version,
    about = "Benchmark quantum and classical one-step forecasters"
)]
pub struct Cli {
    /// Base seed for every run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the grid search.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Repeats per configuration and fold.
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    /// Results directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid search on validation folds, then test-fold evaluation.
    Run { config: PathBuf },
    /// Ranked table and bar chart of the best model per family.
    Report { dir: PathBuf },
    /// Validation MAE per hyperparameter value.
    HpoPlot { dir: PathBuf },
    /// Write a synthetic series described by a TOML generator spec.
    Generate { spec: PathBuf, out: PathBuf },
}

pub fn cmd_generate(spec: &Path, out: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(spec).map_err(|e| {
        Error::Config(format!(
            "cannot read generator spec {}: {e}",
            spec.display()
        ))
    })?;
    let spec: GeneratorSpec = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let series = generate(&spec)?;
    series.write_csv(out)?;
    Ok(series.len())
}

/// Runs one parsed command, printing results; returns the exit status.
pub fn execute(cli: Cli) -> i32 {
    let overrides = Overrides {
        seed: cli.seed,
        parallelism: cli.parallelism,
        repeats: cli.repeats,
        output: cli.output.clone(),
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, &overrides).map(|o| {
            for (family, config, a) in &o.summary {
                println!(
                    "{family:<11} mean MAE {:.6} ± {:.6} ({} runs) {config}",
                    a.mean_mae, a.std_mae, a.count
                );
            }
            for (family, config) in &o.excluded {
                println!("{family}: configuration {config} excluded, every run diverged or failed");
            }
            println!("results written to {}", o.output.display());
            if o.failures.is_empty() {
                EXIT_OK
            } else {
                for (family, why) in &o.failures {
                    eprintln!("{family} failed: {why}");
                }
                EXIT_RUNTIME
            }
        }),
        Command::Report { dir } => cmd_report(dir).map(|table| {
            print!("{table}");
            EXIT_OK
        }),
        Command::HpoPlot { dir } => cmd_hpo_plot(dir).map(|o| {
            for n in &o.notices {
                eprintln!("{n}");
            }
            for p in &o.written {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }),
        Command::Generate { spec, out } => cmd_generate(spec, out).map(|n| {
            println!("wrote {n} values to {}", out.display());
            EXIT_OK
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
