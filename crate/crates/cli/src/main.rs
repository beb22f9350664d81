use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use geoevolver::harness::{self, Config, EpisodeStatus};
use geoevolver::metrics::render_table;

#[derive(Parser)]
#[command(name = "geoevolver", version, about = "Self-evolving multi-agent runs over geoscience tool tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every query of a dataset, evolving the memory bank as it goes.
    Run {
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// evolve or inference
        #[arg(long)]
        mode: Option<String>,
        /// Hide bookkeeping tools (write_todos, update_work_memory) from executors
        /// and leave them out of the metrics.
        #[arg(long)]
        core_tools_only: bool,
        /// Run a plan's sub-goals concurrently instead of in order.
        #[arg(long)]
        parallel_subgoals: bool,
        /// Memory bank file to start from and keep updated.
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
        /// Any other configuration key, as key=value. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Score trajectory logs against a dataset's gold answers and tool sequences.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// A run directory or a directory of `<query-id>.log` files.
        #[arg(long)]
        logs: PathBuf,
        /// Leave bookkeeping tools out of the predicted tool sequences.
        #[arg(long)]
        core_tools_only: bool,
    },
    /// Inspect a memory bank file.
    Memory {
        #[command(subcommand)]
        action: MemoryAction,
    },
    /// Re-read the logs behind a run or episode manifest and print the selected traces.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum MemoryAction {
    /// List item keys and pattern types.
    Ls {
        #[arg(long)]
        bank: PathBuf,
    },
    /// Render one item as a memory card.
    Show {
        key: String,
        #[arg(long)]
        bank: PathBuf,
    },
    /// Write the whole bank as a JSON array.
    Export {
        #[arg(long)]
        bank: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count items by pattern type.
    Stats {
        #[arg(long)]
        bank: PathBuf,
    },
}

fn run_config(
    config: Option<PathBuf>,
    mode: Option<String>,
    core_tools_only: bool,
    parallel_subgoals: bool,
    memory: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    run_id: Option<String>,
    set: Vec<String>,
) -> Result<Config> {
    let mut cfg = match &config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let mut flags: Vec<(String, String)> = Vec::new();
    for pair in set {
        let (k, v) = pair.split_once('=').with_context(|| format!("--set {pair:?}: expected KEY=VALUE"))?;
        flags.push((k.to_string(), v.to_string()));
    }
    if let Some(m) = mode {
        flags.push(("mode".into(), m));
    }
    if core_tools_only {
        flags.push(("core_tools_only".into(), "true".into()));
    }
    if parallel_subgoals {
        flags.push(("parallel_subgoals".into(), "true".into()));
    }
    if let Some(p) = memory {
        flags.push(("memory_path".into(), p.to_string_lossy().into_owned()));
    }
    if let Some(p) = output_dir {
        flags.push(("output_dir".into(), p.to_string_lossy().into_owned()));
    }
    if let Some(id) = run_id {
        flags.push(("run_id".into(), id));
    }
    for (k, v) in flags {
        cfg.set(&k, &v, None)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, dataset, mode, core_tools_only, parallel_subgoals, memory, output_dir, run_id, set } => {
            let cfg = run_config(config, mode, core_tools_only, parallel_subgoals, memory, output_dir, run_id, set)?;
            let outcome = harness::run_benchmark(&cfg, &dataset)?;
            let mut failed = 0;
            for e in &outcome.episodes {
                match e.status {
                    EpisodeStatus::Ok => println!(
                        "{}: variant {} selected, answer {}, {} memories inserted",
                        e.query_id,
                        e.selected_variant.unwrap_or_default(),
                        e.answer.as_deref().unwrap_or("(none)"),
                        e.inserted_keys.len()
                    ),
                    EpisodeStatus::Failed => {
                        failed += 1;
                        println!("{}: failed: {}", e.query_id, e.error.as_deref().unwrap_or("unknown error"));
                    }
                }
            }
            let reports: Vec<_> = outcome.episodes.iter().filter_map(|e| e.metrics.clone()).collect();
            if !reports.is_empty() {
                print!("\n{}", render_table(&reports));
            }
            println!("\nrun written to {}", outcome.run_dir.display());
            Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Eval { dataset, logs, core_tools_only } => {
            let report = harness::evaluate_logs(&dataset, &logs, core_tools_only)?;
            print!("{}", report.table());
            for id in &report.missing_logs {
                eprintln!("no log for {id}");
            }
            for id in &report.unscored {
                eprintln!("{id} has no gold answer; skipped");
            }
            println!("report written to {}", logs.join(harness::REPORT_FILE).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Memory { action } => {
            match action {
                MemoryAction::Ls { bank } => print!("{}", harness::memory_ls(&harness::open_bank_file(&bank)?)),
                MemoryAction::Show { key, bank } => print!("{}", harness::memory_show(&harness::open_bank_file(&bank)?, &key)?),
                MemoryAction::Export { bank, out } => {
                    let text = harness::memory_export(&harness::open_bank_file(&bank)?);
                    match out {
                        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                        None => print!("{text}"),
                    }
                }
                MemoryAction::Stats { bank } => print!("{}", harness::memory_stats(&harness::open_bank_file(&bank)?)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { manifest } => {
            print!("{}", harness::replay(&manifest)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("GEOEVOLVER_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
