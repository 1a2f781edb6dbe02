use hrsim_core::failover::{run_failover, FailoverRun};
use hrsim_core::metrics::{RunMeta, RunRecord};
use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::topology::FailoverScenario;
use rayon::prelude::*;

use crate::config::{CellKey, SweepConfig};
use crate::stats::{cell_of, summarize, CellSummary};
use crate::SweepError;

/// Runs one seeded fail-over experiment.
pub fn run_one(spec: &ScenarioSpec, meta: RunMeta) -> Result<(RunRecord, FailoverScenario, FailoverRun), SweepError> {
    let sc = spec.build(meta.seed).map_err(|e| SweepError::Run { meta: Box::new(meta.clone()), reason: e.to_string() })?;
    let run = run_failover(&sc, spec.network_config())
        .map_err(|e| SweepError::Run { meta: Box::new(meta.clone()), reason: e.to_string() })?;
    Ok((run.record(&sc, meta), sc, run))
}

pub fn meta_for(cfg: &SweepConfig, cell: CellKey, run: u32) -> RunMeta {
    RunMeta {
        family: cell.family,
        n: cell.n,
        penetration: cell.penetration,
        mrai: cell.mrai,
        crwi: cfg.crwi,
        run,
        seed: cfg.run_seed(cell.family, cell.n, run),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by cell, then run.
    pub records: Vec<RunRecord>,
    pub summaries: Vec<CellSummary>,
}

impl SweepResult {
    /// Runs that broke a hard invariant, with what went wrong.
    pub fn violations(&self) -> Vec<(&RunRecord, Vec<String>)> {
        self.records
            .iter()
            .filter_map(|r| {
                let v = r.violations();
                (!v.is_empty()).then_some((r, v))
            })
            .collect()
    }

    /// Fails with diagnostics if any run broke a hard invariant.
    pub fn check(&self) -> Result<(), SweepError> {
        let bad = self.violations();
        if bad.is_empty() {
            return Ok(());
        }
        let lines: Vec<String> = bad
            .iter()
            .map(|(r, v)| format!("{} penetration={} mrai={} run={} seed={}: {}", r.meta.scenario(), r.meta.penetration, r.meta.mrai, r.meta.run, r.meta.seed, v.join(", ")))
            .collect();
        Err(SweepError::Invariant(lines.join("\n")))
    }

    pub fn summary(&self, cell: CellKey) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.cell == cell)
    }
}

/// Executes every cell `runs_per_cell` times on a bounded worker pool.
/// Output does not depend on the worker count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult, SweepError> {
    cfg.validate()?;
    let jobs: Vec<(CellKey, u32)> =
        cfg.cells().into_iter().flat_map(|c| (0..cfg.runs_per_cell).map(move |r| (c, r))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| SweepError::Config(e.to_string()))?;
    let results: Vec<Result<RunRecord, SweepError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, run)| run_one(&cfg.spec(cell), meta_for(cfg, cell, run)).map(|(rec, _, _)| rec))
            .collect()
    });
    let mut records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|a| (cell_of(a), a.meta.run));
    let summaries = summarize(&records, Some(cfg.runs_per_cell))?;
    Ok(SweepResult { records, summaries })
}
