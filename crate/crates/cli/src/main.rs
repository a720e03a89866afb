//! `nssafe`: generate data, train, verify and tabulate results.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nssafe::trainer::Mode;

use config::Overrides;

/// An error with its exit code: 2 usage or configuration, 3 i/o or data
/// generation, 4 numeric failure.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    /// Failures while running the ground truth count as i/o-class unless
    /// they stem from the configuration.
    pub fn generation(e: &nssafe::Error) -> Self {
        let mut err = CliError::from(e);
        if err.code == 4 {
            err.code = 3;
        }
        err
    }
}

impl From<&nssafe::Error> for CliError {
    fn from(e: &nssafe::Error) -> Self {
        use nssafe::Error as E;
        let code = match e {
            E::Config(_) | E::UnknownBenchmark(_) | E::IllFormed(_) | E::Shape(_) | E::NotNormalized(_) | E::EmptyDataset | E::Arity(_) => 2,
            E::Io(_) | E::Json(_) => 3,
            E::Numeric(_) | E::Domain(_) => 4,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<nssafe::Error> for CliError {
    fn from(e: nssafe::Error) -> Self {
        CliError::from(&e)
    }
}

#[derive(Parser)]
#[command(name = "nssafe", version, about = "Worst-case-safe training for neurosymbolic programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured training mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: nssafe::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Write a ground-truth imitation dataset.
    GenData(Common),
    /// Train parameters; writes checkpoint, curves and summary.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a `resume.json` written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Verify a checkpoint; writes metrics and per-cell verdicts.
    #[command(alias = "eval")]
    Verify {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to verify instead of `<out>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Tabulate completed runs and report CSVs.
    Report {
        /// Run directories or report CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for report.md and report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn resolve(c: &Common) -> Result<config::Resolved, CliError> {
    config::load(
        &c.config,
        &Overrides {
            seed: c.seed,
            mode: c.mode,
            out: c.out.clone(),
        },
    )
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("NSSAFE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("NSSAFE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::GenData(c) => commands::gen_data(&resolve(&c)?),
        Command::Train { common, resume } => {
            if commands::train(&resolve(&common)?, resume.as_deref())? {
                Err(CliError {
                    code: 4,
                    message: "training stopped on a numeric failure; best iterate written".into(),
                })
            } else {
                Ok(())
            }
        }
        Command::Verify { common, checkpoint } => commands::evaluate(&resolve(&common)?, checkpoint.as_deref()).map(|_| ()),
        Command::Report { inputs, out } => write_report(&inputs, &out),
    }
}

fn write_report(inputs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let rows = report::collect(inputs)?;
    if rows.is_empty() {
        return Err(CliError::usage("no completed runs to report"));
    }
    let md = report::to_markdown(&rows);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    std::fs::write(out.join("report.md"), &md).map_err(|e| CliError::io(e.to_string()))?;
    std::fs::write(out.join("report.csv"), report::to_csv(&rows)?).map_err(|e| CliError::io(e.to_string()))?;
    print!("{md}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
