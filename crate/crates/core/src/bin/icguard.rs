use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icguard::config::ScenarioConfig;
use icguard::harness::{self, RunMetrics};
use icguard::Error;

#[derive(Parser)]
#[command(name = "icguard", version, about = "Observer-based attack detection for intersection control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the partitioned model and check the observer assumptions.
    CheckModel {
        #[arg(long)]
        config: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Simulate one seeded run and write `run.csv` and `metrics.json`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Independent runs with seeds `seed-base ..`; writes `summary.json`.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::CheckModel { config, json } => {
            let cfg = load(&config)?;
            let report = harness::check_model(&cfg)?;
            if json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
                println!("{text}");
            } else {
                print!("{}", report.to_text());
            }
            if !report.is_ok() {
                return Err(Failure::Config(report.errors.join("; ")));
            }
        }
        Command::Run { config, seed, out } => {
            let cfg = load(&config)?;
            let result = harness::run_scenario(&cfg, seed)?;
            create_dir(&out)?;
            harness::export_csv(&result, &out.join("run.csv"))?;
            let metrics = RunMetrics::from_result(&result, &cfg);
            harness::write_json(&metrics, &out.join("metrics.json"))?;
            println!(
                "seed {seed}: {} samples, crash {:?}, novel alarm {:?}, EOI alarm {:?}",
                result.samples.len(),
                metrics.crash,
                metrics.novel_first_persistent_alarm,
                metrics.eoi_first_persistent_alarm
            );
        }
        Command::Montecarlo { config, runs, seed_base, out } => {
            let cfg = load(&config)?;
            let summary = harness::monte_carlo(&cfg, runs, seed_base)?;
            create_dir(&out)?;
            harness::write_json(&summary, &out.join("summary.json"))?;
            println!(
                "{}/{} runs completed; crashes {}; false alarms novel {} / EOI {}; novel first in {}; median latency novel {:?} EOI {:?}",
                summary.completed,
                summary.runs,
                summary.crash_runs,
                summary.novel_false_alarm_runs,
                summary.eoi_false_alarm_runs,
                summary.novel_before_eoi_runs,
                summary.median_novel_latency,
                summary.median_eoi_latency
            );
            if !summary.failures.is_empty() {
                return Err(Failure::Runtime(format!("{} runs failed", summary.failures.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}
