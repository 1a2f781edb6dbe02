use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hrsim_core::metrics::RunMeta;
use hrsim_core::scenario::ScenarioSpec;
use hrsim_experiment::output::{create, read_records, write_records_csv, write_records_jsonl, write_summary_csv};
use hrsim_experiment::{run_one, run_sweep, summarize, SweepConfig};

/// Hybrid BGP / SDN fail-over experiments.
#[derive(Parser)]
#[command(name = "hrsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a sweep config.
    Sweep {
        config: PathBuf,
        /// Directory for outputs not named in the config.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Overrides the worker count from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a single scenario.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the event trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the delivered-update log as JSON lines.
        #[arg(long)]
        updates: Option<PathBuf>,
    },
    /// Boxplot statistics from a records file (.csv or JSON lines).
    Summarize {
        records: PathBuf,
        #[arg(long)]
        runs_per_cell: Option<u32>,
        /// Long-format CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn sweep(config: &Path, out_dir: &Path, workers: Option<usize>) -> Result<ExitCode> {
    let mut cfg: SweepConfig = read_json(config)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    log::info!("{} cells x {} runs", cfg.cells().len(), cfg.runs_per_cell);
    let result = run_sweep(&cfg)?;
    let path = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| out_dir.join(name));
    let csv_path = path(&cfg.output.records_csv, "records.csv");
    write_records_csv(&result.records, create(&csv_path)?)?;
    write_records_jsonl(&result.records, create(&path(&cfg.output.records_json, "records.jsonl"))?)?;
    let summary_path = path(&cfg.output.summary_csv, "summary.csv");
    write_summary_csv(&result.summaries, create(&summary_path)?)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<22} {:>3} {:>4} {:>5}  {:>10} {:>10} {:>10}", "family", "n", "pen", "mrai", "conv q1", "conv med", "conv q3")?;
    for s in &result.summaries {
        let c = &s.convergence_time;
        writeln!(
            out,
            "{:<22} {:>3} {:>4} {:>5}  {:>10.3} {:>10.3} {:>10.3}",
            s.cell.family.name(),
            s.cell.n,
            s.cell.penetration,
            s.cell.mrai.as_secs_f64(),
            c.q1,
            c.median,
            c.q3
        )?;
    }
    writeln!(out, "records: {}\nsummary: {}", csv_path.display(), summary_path.display())?;
    if let Err(e) = result.check() {
        eprintln!("{e}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(scenario: &Path, seed: u64, trace: Option<&Path>, updates: Option<&Path>) -> Result<ExitCode> {
    let spec: ScenarioSpec = read_json(scenario)?;
    let meta = RunMeta {
        family: spec.family,
        n: spec.n,
        penetration: spec.penetration.round() as u32,
        mrai: spec.mrai,
        crwi: spec.crwi,
        run: 0,
        seed,
    };
    // the trace is only recorded when asked for
    let (record, _, fr) = if trace.is_some() {
        let sc = spec.build(seed)?;
        let mut cfg = spec.network_config();
        cfg.record_trace = true;
        let fr = hrsim_core::failover::run_failover(&sc, cfg)?;
        (fr.record(&sc, meta), sc, fr)
    } else {
        run_one(&spec, meta)?
    };
    if let Some(path) = trace {
        let mut w = create(path)?;
        for e in fr.world.trace() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    if let Some(path) = updates {
        let mut w = create(path)?;
        for e in fr.world.update_log() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&record)?);
    let violations = record.violations();
    if !violations.is_empty() {
        eprintln!("invariant violated: {}", violations.join(", "));
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize_cmd(records: &Path, runs_per_cell: Option<u32>, out: Option<&Path>) -> Result<ExitCode> {
    let records = read_records(records)?;
    let summaries = summarize(&records, runs_per_cell)?;
    match out {
        Some(p) => write_summary_csv(&summaries, create(p)?)?,
        None => write_summary_csv(&summaries, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep { config, out_dir, workers } => sweep(config, out_dir, *workers),
        Command::Run { scenario, seed, trace, updates } => run(scenario, *seed, trace.as_deref(), updates.as_deref()),
        Command::Summarize { records, runs_per_cell, out } => summarize_cmd(records, *runs_per_cell, out.as_deref()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
