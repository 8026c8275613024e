use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use proxyaddr_core::report::{self, ReportError};
use proxyaddr_core::scenario::{self, ConfigFile, RunError};

/// Simulates proxy-based, DAD and DHCP address allocation.
#[derive(Parser)]
#[command(name = "proxyaddr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario in a config file and write metrics.csv and summary.json.
    Run {
        config: PathBuf,
        /// Override the first seed of every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output`, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Aggregate metrics files into a per-scheme comparison table.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also write the table as CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 3;
const EXIT_SIM: u8 = 4;
const EXIT_WRITE: u8 = 5;
const EXIT_EMPTY: u8 = 6;
const EXIT_READ: u8 = 7;

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, jobs: usize) -> ExitCode {
    let file = match ConfigFile::load(&config) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let file = match seed {
        Some(s) => file.with_seed(s),
        None => file,
    };
    let dir = out
        .or_else(|| file.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let result = file
        .expand()
        .map_err(RunError::from)
        .and_then(|points| scenario::run_points(&points, jobs))
        .and_then(|rows| Ok((scenario::write_outputs(&dir, &rows)?, rows)));
    match result {
        Ok((outputs, rows)) => {
            print!("{}", report::render_table(&report::compare(&rows)));
            println!(
                "{} runs -> {} {}",
                rows.len(),
                outputs.metrics.display(),
                outputs.summary.display()
            );
            ExitCode::SUCCESS
        }
        Err(e @ RunError::Config(_)) => fail(EXIT_CONFIG, e),
        Err(e @ (RunError::Sim { .. } | RunError::Pool(_))) => fail(EXIT_SIM, e),
        Err(e @ RunError::Write { .. }) => fail(EXIT_WRITE, e),
    }
}

fn report(files: Vec<PathBuf>, out: Option<PathBuf>) -> ExitCode {
    let summaries = match report::report_files(&files) {
        Ok(s) => s,
        Err(e @ ReportError::EmptyInput) => return fail(EXIT_EMPTY, e),
        Err(e @ ReportError::Read { .. }) => return fail(EXIT_READ, e),
    };
    print!("{}", report::render_table(&summaries));
    if let Some(path) = out {
        if let Err(e) = report::write_report(&path, &summaries) {
            return fail(EXIT_WRITE, format!("cannot write {}: {e}", path.display()));
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            jobs,
        } => run(config, seed, out, jobs),
        Command::Report { files, out } => report(files, out),
    }
}
