//! Update log, convergence and churn measurement, and forwarding analysis.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::{AsPath, BgpUpdate, UpdateKind};
use crate::sim::SimTime;
use crate::topology::{Asn, GraphFamily, Prefix};

/// What made a sender emit an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Origination,
    Update,
    Mrai,
    Link,
    Install,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateType {
    Announce,
    Withdraw,
}

/// One delivered BGP message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateLogEntry {
    pub time: SimTime,
    pub sent: SimTime,
    pub sender: Asn,
    pub receiver: Asn,
    pub kind: UpdateType,
    pub prefix: Prefix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub as_path: Option<AsPath>,
    /// Copy delivered to the route collector.
    pub collector: bool,
    pub cause: Cause,
}

impl UpdateLogEntry {
    pub fn new(time: SimTime, sent: SimTime, update: &BgpUpdate, collector: bool, cause: Cause) -> Self {
        let (kind, as_path) = match &update.kind {
            UpdateKind::Announce { as_path, .. } => (UpdateType::Announce, Some(as_path.clone())),
            UpdateKind::Withdraw { .. } => (UpdateType::Withdraw, None),
        };
        UpdateLogEntry {
            time,
            sent,
            sender: update.sender,
            receiver: update.receiver,
            kind,
            prefix: update.prefix(),
            as_path,
            collector,
            cause,
        }
    }
}

/// A selected route (legacy AS) or installed forwarding entry (cluster AS)
/// changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub time: SimTime,
    pub asn: Asn,
    pub prefix: Prefix,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("convergence is only defined once the simulation is quiescent")]
    NotQuiescent,
}

/// Time from `trigger` to the last routing-state change or inter-AS update
/// delivery at or after it, whichever is later; zero if nothing happened.
pub fn measure_convergence(
    log: &[UpdateLogEntry],
    changes: &[StateChange],
    trigger: SimTime,
    quiescent: bool,
) -> Result<SimTime, MetricsError> {
    if !quiescent {
        return Err(MetricsError::NotQuiescent);
    }
    let last_delivery = log.iter().filter(|e| !e.collector && e.time >= trigger).map(|e| e.time).max();
    let last_change = changes.iter().filter(|c| c.time >= trigger).map(|c| c.time).max();
    Ok(last_delivery.max(last_change).map_or(SimTime::ZERO, |t| t - trigger))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Churn {
    pub updates: u64,
    /// Updates per second; 0 when the window is empty.
    pub rate: f64,
    pub zero_duration: bool,
}

/// Inter-AS updates delivered in `[trigger, trigger + duration]`, collector
/// copies excluded, per second of `duration`.
pub fn measure_churn(log: &[UpdateLogEntry], trigger: SimTime, duration: SimTime) -> Churn {
    let end = trigger + duration;
    let updates = log.iter().filter(|e| !e.collector && e.time >= trigger && e.time <= end).count() as u64;
    if duration.is_zero() {
        return Churn { updates, rate: 0.0, zero_duration: true };
    }
    Churn { updates, rate: updates as f64 / duration.as_secs_f64(), zero_duration: false }
}

/// Forwarding entry of one AS for one prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "next_hop", rename_all = "snake_case")]
pub enum Fwd {
    /// The prefix is originated here.
    Local,
    Via(Asn),
    /// Next hop over a link that is down.
    Stale(Asn),
    NoRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Delivered,
    Loop,
    Blackhole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardingSnapshot {
    pub at: SimTime,
    pub prefix: Prefix,
    pub entries: BTreeMap<Asn, Fwd>,
    pub verdicts: BTreeMap<Asn, Verdict>,
}

impl ForwardingSnapshot {
    pub fn count(&self, v: Verdict) -> usize {
        self.verdicts.values().filter(|x| **x == v).count()
    }

    pub fn loops(&self) -> usize {
        self.count(Verdict::Loop)
    }

    pub fn blackholes(&self) -> usize {
        self.count(Verdict::Blackhole)
    }

    pub fn reachable_fraction(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 0.0;
        }
        self.count(Verdict::Delivered) as f64 / self.verdicts.len() as f64
    }
}

/// Walks next hops from every AS and classifies where packets end up.
pub fn forwarding_snapshot(entries: BTreeMap<Asn, Fwd>, prefix: Prefix, at: SimTime) -> ForwardingSnapshot {
    let verdicts = entries.keys().map(|&a| (a, walk(&entries, a))).collect();
    ForwardingSnapshot { at, prefix, entries, verdicts }
}

fn walk(entries: &BTreeMap<Asn, Fwd>, from: Asn) -> Verdict {
    let mut seen = BTreeSet::new();
    let mut at = from;
    loop {
        if !seen.insert(at) {
            return Verdict::Loop;
        }
        match entries.get(&at) {
            Some(Fwd::Local) => return Verdict::Delivered,
            Some(Fwd::Via(n)) => at = *n,
            Some(Fwd::Stale(_)) | Some(Fwd::NoRoute) | None => return Verdict::Blackhole,
        }
    }
}

/// Identifies one run of the fail-over experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub family: GraphFamily,
    pub n: u32,
    pub penetration: u32,
    pub mrai: SimTime,
    pub crwi: SimTime,
    pub run: u32,
    pub seed: u64,
}

impl RunMeta {
    pub fn scenario(&self) -> String {
        format!("{}-{}", self.family.name(), self.n)
    }
}

/// Per-run results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub meta: RunMeta,
    pub cluster_size: u32,
    pub client: Asn,
    pub primary: Asn,
    pub backup: Asn,
    pub trigger_time: SimTime,
    pub convergence_time: SimTime,
    pub update_count: u64,
    pub churn_rate: f64,
    pub zero_duration: bool,
    pub post_convergence_loops: u32,
    pub blackholes: u32,
    pub reachable_fraction: f64,
    pub recomputations: u32,
    pub events: u64,
    pub mrai_withdrawals: u64,
    pub looped_controller_adverts: u64,
    /// Final AS-path length towards the client prefix, per AS.
    pub hop_counts: BTreeMap<Asn, u32>,
}

impl RunRecord {
    /// Hard invariants every fail-over run must satisfy.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.post_convergence_loops > 0 {
            v.push(format!("{} ASes in forwarding loops after convergence", self.post_convergence_loops));
        }
        if self.blackholes > 0 {
            v.push(format!("{} ASes blackholed after convergence", self.blackholes));
        }
        if self.looped_controller_adverts > 0 {
            v.push(format!("{} controller advertisements with repeated ASes", self.looped_controller_adverts));
        }
        if self.mrai_withdrawals > 0 {
            v.push(format!("{} withdrawals delayed by MRAI", self.mrai_withdrawals));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Prefix {
        "10.0.0.0/24".parse().unwrap()
    }

    fn entry(t_ms: u64, from: u32, to: u32, collector: bool) -> UpdateLogEntry {
        let u = BgpUpdate::withdraw(Asn(from), Asn(to), p());
        UpdateLogEntry::new(SimTime::from_millis(t_ms), SimTime::from_millis(t_ms), &u, collector, Cause::Update)
    }

    #[test]
    fn convergence_is_zero_without_activity() {
        let log = vec![entry(500, 1, 2, false)];
        assert_eq!(measure_convergence(&log, &[], SimTime::from_secs(1), true), Ok(SimTime::ZERO));
        assert_eq!(measure_convergence(&log, &[], SimTime::ZERO, false), Err(MetricsError::NotQuiescent));
    }

    #[test]
    fn convergence_takes_later_of_change_and_delivery() {
        let log = vec![entry(1500, 1, 2, false), entry(4000, 1, 9, true)];
        let changes = [StateChange { time: SimTime::from_millis(2500), asn: Asn(2), prefix: p() }];
        let t = measure_convergence(&log, &changes, SimTime::from_secs(1), true).unwrap();
        assert_eq!(t, SimTime::from_millis(1500));
        let t = measure_convergence(&log[..1], &[], SimTime::from_secs(1), true).unwrap();
        assert_eq!(t, SimTime::from_millis(500));
    }

    #[test]
    fn churn_counts_window_and_skips_collector() {
        let log = vec![entry(900, 1, 2, false), entry(1000, 1, 2, false), entry(1500, 2, 9, true), entry(2000, 2, 1, false)];
        let c = measure_churn(&log, SimTime::from_secs(1), SimTime::from_secs(1));
        assert_eq!(c.updates, 2);
        assert_eq!(c.rate, 2.0);
        let without: Vec<_> = log.iter().filter(|e| !e.collector).cloned().collect();
        assert_eq!(measure_churn(&without, SimTime::from_secs(1), SimTime::from_secs(1)), c);
        let z = measure_churn(&log, SimTime::from_secs(1), SimTime::ZERO);
        assert!(z.zero_duration);
        assert_eq!(z.rate, 0.0);
    }

    #[test]
    fn one_update_in_one_second() {
        let c = measure_churn(&[entry(1200, 1, 2, false)], SimTime::from_secs(1), SimTime::from_secs(1));
        assert_eq!((c.updates, c.rate), (1, 1.0));
    }

    #[test]
    fn snapshot_classifies_walks() {
        let entries: BTreeMap<Asn, Fwd> = [
            (Asn(1), Fwd::Local),
            (Asn(2), Fwd::Via(Asn(1))),
            (Asn(3), Fwd::Via(Asn(4))),
            (Asn(4), Fwd::Via(Asn(3))),
            (Asn(5), Fwd::Via(Asn(3))),
            (Asn(6), Fwd::NoRoute),
            (Asn(7), Fwd::Stale(Asn(1))),
        ]
        .into();
        let s = forwarding_snapshot(entries, p(), SimTime::ZERO);
        assert_eq!(s.verdicts[&Asn(2)], Verdict::Delivered);
        assert_eq!(s.verdicts[&Asn(5)], Verdict::Loop);
        assert_eq!(s.loops(), 3);
        assert_eq!(s.blackholes(), 2);
        assert!((s.reachable_fraction() - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn no_originator_means_all_blackholed() {
        let entries: BTreeMap<Asn, Fwd> = (1..=4).map(|a| (Asn(a), Fwd::NoRoute)).collect();
        let s = forwarding_snapshot(entries, p(), SimTime::ZERO);
        assert_eq!(s.blackholes(), 4);
        assert_eq!(s.reachable_fraction(), 0.0);
    }
}
