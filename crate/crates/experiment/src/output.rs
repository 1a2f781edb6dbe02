use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use hrsim_core::metrics::{RunMeta, RunRecord};
use hrsim_core::sim::SimTime;
use hrsim_core::topology::{Asn, GraphFamily};
use serde::{Deserialize, Serialize};

use crate::stats::{CellSummary, METRICS};
use crate::SweepError;

/// Flat CSV form of a [`RunRecord`]; per-AS hop counts are JSON-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    family: GraphFamily,
    n: u32,
    penetration: u32,
    mrai: SimTime,
    crwi: SimTime,
    run: u32,
    seed: u64,
    cluster_size: u32,
    client: Asn,
    primary: Asn,
    backup: Asn,
    trigger_time: SimTime,
    convergence_time: SimTime,
    update_count: u64,
    churn_rate: f64,
    zero_duration: bool,
    post_convergence_loops: u32,
    blackholes: u32,
    reachable_fraction: f64,
    recomputations: u32,
    events: u64,
    mrai_withdrawals: u64,
    looped_controller_adverts: u64,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        CsvRow {
            family: r.meta.family,
            n: r.meta.n,
            penetration: r.meta.penetration,
            mrai: r.meta.mrai,
            crwi: r.meta.crwi,
            run: r.meta.run,
            seed: r.meta.seed,
            cluster_size: r.cluster_size,
            client: r.client,
            primary: r.primary,
            backup: r.backup,
            trigger_time: r.trigger_time,
            convergence_time: r.convergence_time,
            update_count: r.update_count,
            churn_rate: r.churn_rate,
            zero_duration: r.zero_duration,
            post_convergence_loops: r.post_convergence_loops,
            blackholes: r.blackholes,
            reachable_fraction: r.reachable_fraction,
            recomputations: r.recomputations,
            events: r.events,
            mrai_withdrawals: r.mrai_withdrawals,
            looped_controller_adverts: r.looped_controller_adverts,
        }
    }
}

impl From<CsvRow> for RunRecord {
    fn from(r: CsvRow) -> Self {
        RunRecord {
            meta: RunMeta {
                family: r.family,
                n: r.n,
                penetration: r.penetration,
                mrai: r.mrai,
                crwi: r.crwi,
                run: r.run,
                seed: r.seed,
            },
            cluster_size: r.cluster_size,
            client: r.client,
            primary: r.primary,
            backup: r.backup,
            trigger_time: r.trigger_time,
            convergence_time: r.convergence_time,
            update_count: r.update_count,
            churn_rate: r.churn_rate,
            zero_duration: r.zero_duration,
            post_convergence_loops: r.post_convergence_loops,
            blackholes: r.blackholes,
            reachable_fraction: r.reachable_fraction,
            recomputations: r.recomputations,
            events: r.events,
            mrai_withdrawals: r.mrai_withdrawals,
            looped_controller_adverts: r.looped_controller_adverts,
            hop_counts: Default::default(),
        }
    }
}

pub fn write_records_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<RunRecord>, SweepError> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<CsvRow>().map(|row| Ok(row?.into())).collect()
}

/// One JSON object per line.
pub fn write_records_jsonl<W: Write>(records: &[RunRecord], mut out: W) -> Result<(), SweepError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_jsonl<R: Read>(input: R) -> Result<Vec<RunRecord>, SweepError> {
    BufReader::new(input)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Reads records from a `.csv` file or a JSON-lines file.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, SweepError> {
    let f = File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_records_csv(f)
    } else {
        read_records_jsonl(f)
    }
}

/// Long format: one row per (cell, metric, statistic).
pub fn write_summary_csv<W: Write>(summaries: &[CellSummary], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "n", "penetration", "mrai", "runs", "metric", "statistic", "value"])?;
    for s in summaries {
        for metric in METRICS {
            let stats = s.metric(metric).expect("listed metric");
            for (stat, value) in stats.entries() {
                w.write_record([
                    s.cell.family.name().to_string(),
                    s.cell.n.to_string(),
                    s.cell.penetration.to_string(),
                    s.cell.mrai.as_secs_f64().to_string(),
                    s.runs.to_string(),
                    metric.to_string(),
                    stat.to_string(),
                    value.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>, SweepError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}
