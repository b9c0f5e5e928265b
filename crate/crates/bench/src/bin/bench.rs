use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use socnav::controllers::{list_all_controllers, list_paper_controllers};
use socnav::scenarios::ScenarioKind;
use socnav_bench::output::{read_records, summary_csv, summary_table};
use socnav_bench::suite::run_suite_with_progress;
use socnav_bench::{aggregate, emit, preflight, BenchConfig, BenchError, Result};

#[derive(Parser)]
#[command(name = "bench", version, about = "Crowd navigation controller benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark suite and write records, summaries and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these controllers (repeatable).
        #[arg(long = "controller", value_name = "NAME")]
        controllers: Vec<String>,
        /// Restrict to these scenario kinds (repeatable).
        #[arg(long = "scenario", value_name = "KIND")]
        scenarios: Vec<ScenarioKind>,
        /// Master seed; takes precedence over BENCH_SEED and the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenes per (scenario, n_ped) cell.
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Write per-episode trajectory CSVs.
        #[arg(long)]
        trace: bool,
        /// Output directory, overriding `output.dir`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Print the summary table for an existing records CSV.
    Aggregate {
        #[arg(long)]
        records: PathBuf,
        /// Also write the summary CSV here.
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
    },
    /// List controller names.
    ListControllers {
        /// Include the names accepted beyond the thirteen benchmark variants.
        #[arg(long)]
        all: bool,
    },
    /// Print the default configuration as TOML.
    PrintDefaultConfig,
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            controllers,
            scenarios,
            seed,
            scenes,
            jobs,
            trace,
            out,
            quiet,
        } => {
            let mut cfg = BenchConfig::load(&config)?;
            cfg.apply_env()?;
            if !controllers.is_empty() {
                cfg.controllers = controllers;
            }
            if !scenarios.is_empty() {
                cfg.scenarios = scenarios;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(n) = scenes {
                cfg.scenes_per_cell = n;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            cfg.trace |= trace;
            cfg.validate()?;
            preflight(&cfg)?;

            let records = run_suite_with_progress(&cfg, |done, total| {
                if !quiet && (done % 10 == 0 || done == total) {
                    eprintln!("{done}/{total} episodes");
                }
            })?;
            let summaries = aggregate(&records);
            emit(&summaries, &records, &cfg)?;
            if !quiet {
                print!("{}", summary_table(&summaries));
                eprintln!("wrote {}", cfg.output.dir.display());
            }
            Ok(())
        }
        Command::Aggregate { records, summary } => {
            let recs = read_records(&records)?;
            let summaries = aggregate(&recs);
            if let Some(path) = summary {
                std::fs::write(&path, summary_csv(&summaries)?).map_err(|e| BenchError::Io { path, source: e })?;
            }
            print!("{}", summary_table(&summaries));
            Ok(())
        }
        Command::ListControllers { all } => {
            let names = if all { list_all_controllers() } else { list_paper_controllers() };
            for n in names {
                println!("{n}");
            }
            Ok(())
        }
        Command::PrintDefaultConfig => {
            print!("{}", BenchConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
