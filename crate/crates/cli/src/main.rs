//! `qnlchain <task> --config FILE [--out DIR] [--force] [--threads K]`

mod config;
mod error;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::{Scenario, Task};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qnlchain", version, about = "Runs atomistic/QNL chain experiments from a scenario file")]
struct Cli {
    task: Task,
    /// Scenario file (`.toml`, or `.json`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Worker threads for independent sub-runs.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let sc = Scenario::load(&cli.config)?;
    sc.validate(cli.task)?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    output::ensure_writable(&cli.out, &tasks::outputs(cli.task, &sc), cli.force)?;
    let report = tasks::run(cli.task, &sc)?;
    output::write_all(&cli.out, &report.artifacts)?;
    for line in &report.summary {
        println!("{line}");
    }
    if report.unconverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Task(format!("did not converge: {}", report.unconverged.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qnlchain: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
