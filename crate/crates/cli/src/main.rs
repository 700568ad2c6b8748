use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vme_cli::{parse_config, run_experiment, run_matrix, CliError};

#[derive(Parser)]
#[command(
    name = "vme",
    version,
    about = "Two-scale explicit dynamics for 1-D hyperelastic bars"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Solve {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every row of a manifest and write a summary table.
    Matrix { manifest: PathBuf },
}

fn solve(path: &Path, workers: Option<usize>, out: Option<PathBuf>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse {
        line: None,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut config = parse_config(&text)?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Validation(vec![
                "--workers must be at least 1".into()
            ]));
        }
        config.workers = Some(w);
    }
    if let Some(dir) = out {
        config.output_dir = dir;
    }
    let report = run_experiment(&config)?;
    for (name, r) in [("vme", &report.vme), ("dns", &report.dns)] {
        if let Some(r) = r {
            println!(
                "{name}: {} steps, {:.2} s",
                r.steps.len().saturating_sub(1),
                r.wall_seconds
            );
        }
    }
    for e in &report.errors {
        let err = e.error.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
        println!(
            "t={:<8} vme t={:.6} dns t={:.6} relative error {err}",
            e.requested, e.time_vme, e.time_dns
        );
    }
    println!("outputs in {}", config.output_dir.display());
    Ok(())
}

fn matrix(path: &Path) -> Result<bool, CliError> {
    let summary = run_matrix(path)?;
    print!("{}", vme_cli::matrix::format_table(&summary.rows));
    println!("summary in {}", summary.output_dir.display());
    Ok(summary.failures() == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Solve {
            config,
            workers,
            out,
        } => solve(&config, workers, out).map(|_| true),
        Command::Matrix { manifest } => matrix(&manifest),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
