use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use qpddm::config::{Axis, RunConfig};
use qpddm::driver::{run_solve, run_sweep, run_table, sweep_csv, table_config, ResultRecord, TABLES};
use qpddm::error::Error;
use qpddm::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "qpddm", version, about = "Quasi-periodic layered-media Helmholtz transmission solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write result.json and timings.json.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Result record of a finer run used for the eps1 error.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve once per value of a parameter and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ladder of a shipped configuration.
    Table {
        #[arg(long)]
        name: String,
        /// Skip the reference solve and leave eps1 empty.
        #[arg(long)]
        no_reference: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped configurations.
    List,
    /// Run the invariant suite.
    Selftest,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error.downcast_ref::<Error>().map_or(3, |e| e.exit_code()) as u8;
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn io_failure(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(io_failure)?;
    Ok(RunConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?)
}

fn load_reference(path: Option<&PathBuf>) -> Result<Option<ResultRecord>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(io_failure)?;
    Ok(Some(ResultRecord::from_json(&text).with_context(|| format!("in {}", path.display()))?))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join(name), text))
        .with_context(|| format!("writing {}", dir.join(name).display()))
        .map_err(io_failure)
}

fn emit_csv(csv: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    print!("{csv}");
    match out {
        Some(dir) => write(dir, "sweep.csv", csv),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { config, reference, out } => {
            let cfg = load_config(&config)?;
            let reference = load_reference(reference.as_ref())?;
            let (record, timings) = run_solve(&cfg, reference.as_ref())?;
            write(&out, "result.json", &record.to_json())?;
            let text = serde_json::to_string_pretty(&timings).context("encoding timings")?;
            write(&out, "timings.json", &text)?;
            let eps1 = record.eps1.map(|e| format!(" eps1={e:.3e}")).unwrap_or_default();
            println!("eps_en={:.3e}{eps1} total_s={:.3}", record.eps_en, timings.total_s);
            Ok(())
        }
        Command::Sweep { config, axis, values, reference, out } => {
            let cfg = load_config(&config)?;
            let reference = load_reference(reference.as_ref())?;
            let rows = run_sweep(&cfg, axis, &values, reference.as_ref())?;
            emit_csv(&sweep_csv(axis, &rows, &[]), out.as_ref())
        }
        Command::Table { name, no_reference, out } => {
            let cfg = table_config(&name)?;
            let run = run_table(&cfg, !no_reference)?;
            emit_csv(&sweep_csv(run.axis, &run.rows, &run.target), out.as_ref())
        }
        Command::List => {
            for (name, _) in TABLES {
                let cfg = table_config(name)?;
                println!("{name}\t{}", cfg.name.unwrap_or_default());
            }
            Ok(())
        }
        Command::Selftest => {
            let report = run_selftest();
            let mut failed = 0;
            for c in &report {
                println!("{} {:<40} {:>7.2}s  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
                failed += usize::from(!c.passed);
            }
            let total: f64 = report.iter().map(|c| c.seconds).sum();
            println!("{} of {} checks passed in {total:.1}s", report.len() - failed, report.len());
            if failed > 0 {
                return Err(Failure { code: 2, error: anyhow::anyhow!("{failed} selftest checks failed") });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(3),
    }
}
