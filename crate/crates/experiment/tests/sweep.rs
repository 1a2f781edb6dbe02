use std::process::Command;

use hrsim_core::sim::SimTime;
use hrsim_core::topology::GraphFamily;
use hrsim_experiment::output::{read_records_csv, read_records_jsonl, write_records_csv, write_records_jsonl};
use hrsim_experiment::{run_sweep, summarize, SweepConfig, SweepError};

fn small() -> SweepConfig {
    SweepConfig {
        families: vec![GraphFamily::Clique, GraphFamily::BarabasiAlbert],
        sizes: vec![8],
        penetrations: vec![0, 50],
        mrai: vec![SimTime::from_secs(30)],
        runs_per_cell: 4,
        ..SweepConfig::default()
    }
}

fn csv_bytes(cfg: &SweepConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_records_csv(&run_sweep(cfg).unwrap().records, &mut out).unwrap();
    out
}

#[test]
fn sweeps_are_byte_identical_across_worker_counts() {
    let base = csv_bytes(&small());
    assert_eq!(base, csv_bytes(&small()));
    for workers in [1, 2, 5] {
        assert_eq!(base, csv_bytes(&SweepConfig { workers: Some(workers), ..small() }));
    }
}

#[test]
fn records_are_ordered_and_paired() {
    let res = run_sweep(&small()).unwrap();
    assert_eq!(res.records.len(), 16);
    assert_eq!(res.summaries.len(), 4);
    res.check().unwrap();
    // same run index => same topology and providers at every penetration
    for r in res.records.iter().filter(|r| r.meta.penetration == 50) {
        let twin = res
            .records
            .iter()
            .find(|o| o.meta.penetration == 0 && o.meta.family == r.meta.family && o.meta.run == r.meta.run)
            .unwrap();
        assert_eq!((twin.meta.seed, twin.primary, twin.backup, twin.client), (r.meta.seed, r.primary, r.backup, r.client));
    }
}

#[test]
fn record_files_round_trip() {
    let res = run_sweep(&small()).unwrap();
    let mut json = Vec::new();
    write_records_jsonl(&res.records, &mut json).unwrap();
    assert_eq!(read_records_jsonl(json.as_slice()).unwrap(), res.records);

    let mut csv = Vec::new();
    write_records_csv(&res.records, &mut csv).unwrap();
    let back = read_records_csv(csv.as_slice()).unwrap();
    assert_eq!(back.len(), res.records.len());
    for (a, b) in back.iter().zip(&res.records) {
        assert_eq!((a.meta.clone(), a.convergence_time, a.update_count, a.churn_rate), (b.meta.clone(), b.convergence_time, b.update_count, b.churn_rate));
    }
    assert_eq!(summarize(&back, Some(4)).unwrap(), res.summaries);
}

#[test]
fn missing_runs_are_reported() {
    let mut records = run_sweep(&small()).unwrap().records;
    records.remove(5);
    match summarize(&records, Some(4)) {
        Err(SweepError::Incomplete(msg)) => assert!(msg.contains("missing runs [1]"), "{msg}"),
        other => panic!("expected an incomplete-cell error, got {other:?}"),
    }
    assert!(matches!(summarize(&[], None), Err(SweepError::Incomplete(_))));
}

#[test]
fn summary_medians_match_a_direct_computation() {
    let res = run_sweep(&small()).unwrap();
    for s in &res.summaries {
        let mut v: Vec<f64> = res
            .records
            .iter()
            .filter(|r| r.meta.family == s.cell.family && r.meta.penetration == s.cell.penetration)
            .map(|r| r.convergence_time.as_secs_f64())
            .collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v.len(), 4);
        assert_eq!(s.convergence_time.median, (v[1] + v[2]) / 2.0);
        assert_eq!((s.convergence_time.min, s.convergence_time.max), (v[0], v[3]));
    }
}

fn hrsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hrsim"))
}

#[test]
fn cli_sweep_run_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(&cfg, r#"{"families":["clique"],"sizes":[8],"penetrations":[0,75],"mrai":[30],"runs_per_cell":2,"workers":2}"#)
        .unwrap();
    let out = hrsim().arg("sweep").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = dir.path().join("records.csv");
    assert!(records.exists() && dir.path().join("records.jsonl").exists() && dir.path().join("summary.csv").exists());

    let summary = dir.path().join("again.csv");
    let out = hrsim().arg("summarize").arg(&records).arg("--out").arg(&summary).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&summary).unwrap(), std::fs::read(dir.path().join("summary.csv")).unwrap());

    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, r#"{"family":"clique","n":8,"penetration":50}"#).unwrap();
    let trace = dir.path().join("trace.jsonl");
    let run = |extra: &[&std::ffi::OsStr]| hrsim().arg("run").arg(&scenario).args(["--seed", "9"]).args(extra).output().unwrap();
    let first = run(&[std::ffi::OsStr::new("--trace"), trace.as_os_str()]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let record: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(record["seed"], 9);
    assert!(record["convergence_time"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(&trace).unwrap().lines().count() > 10);
    assert_eq!(run(&[]).stdout, first.stdout);
}

#[test]
fn cli_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"runs_per_cell":0}"#).unwrap();
    let out = hrsim().arg("sweep").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let out = hrsim().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}
