//! `foa`: run scenario files and benchmark sweeps.
//!
//! Exit codes: 0 when every job finished, 1 when any job failed, 2 for
//! unreadable or invalid input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use foa_core::bench::{run_bench, BenchMode};
use foa_core::scenario::{bundled, bundled_names, run_scenario, summary_table, RunOverrides, Scenario};

#[derive(Debug, Parser)]
#[command(name = "foa", version, about = "Capability-routed agent federation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every task of a scenario file (or a bundled scenario by name).
    Run {
        scenario: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the per-job wall-clock budget.
        #[arg(long)]
        timeout_ms: Option<u64>,
        /// Writes one JSON report per job plus summary.txt here.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Sweep a component over sizes and print a table.
    Bench {
        mode: BenchMode,
        #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(arg: &str) -> Result<Scenario, String> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()));
    }
    bundled(arg).ok_or_else(|| {
        format!(
            "{arg}: no such file or bundled scenario (bundled: {})",
            bundled_names().join(", ")
        )
    })
}

fn run(scenario: String, seed: Option<u64>, timeout_ms: Option<u64>, report_dir: Option<PathBuf>) -> ExitCode {
    let mut scenario = match load(&scenario) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = scenario.config.apply_env() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let outcome = match run_scenario(&scenario, RunOverrides { seed, timeout_ms }) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let table = summary_table(&outcome.reports);
    print!("{table}");
    if let Some(dir) = report_dir {
        if let Err(e) = write_reports(&dir, &outcome.reports, &table) {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    }
    if outcome.all_done() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn write_reports(dir: &Path, reports: &[foa_core::orchestrator::JobReport], table: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in reports {
        let path = dir.join(format!("{}.json", r.job_id));
        std::fs::write(&path, r.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    }
    std::fs::write(dir.join("summary.txt"), table).context("writing summary.txt")?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            timeout_ms,
            report_dir,
        } => run(scenario, seed, timeout_ms, report_dir),
        Command::Bench { mode, sizes, seed } => match run_bench(mode, &sizes, seed) {
            Ok(t) => {
                print!("{}", t.render());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
