//! Replays a recorded event trace with a straight-line interpreter that
//! knows nothing about the simulator internals, and checks the convergence
//! and churn numbers the simulator reported against it.

use std::collections::BTreeMap;

use hrsim_core::bgp::{AsPath, UpdateKind};
use hrsim_core::failover::run_failover;
use hrsim_core::network::{Event, TraceEntry};
use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::sim::SimTime;
use hrsim_core::topology::{Asn, GraphFamily, Prefix};

#[derive(Default)]
struct Replay {
    /// (min, max) endpoint -> (up, epoch)
    links: BTreeMap<(Asn, Asn), (bool, u64)>,
    local: BTreeMap<Asn, Vec<Prefix>>,
    rib: BTreeMap<(Asn, Prefix), BTreeMap<Asn, AsPath>>,
    best: BTreeMap<(Asn, Prefix), (usize, u32, AsPath)>,
    /// (time, asn) of every best-route change
    changes: Vec<(SimTime, Asn)>,
    /// times of accepted deliveries between ASes (collector excluded)
    deliveries: Vec<SimTime>,
}

fn key(a: Asn, b: Asn) -> (Asn, Asn) {
    (a.min(b), a.max(b))
}

impl Replay {
    fn reselect(&mut self, at: Asn, prefix: Prefix, now: SimTime) {
        let local = self.local.get(&at).is_some_and(|v| v.contains(&prefix));
        let best = if local {
            Some((0, 0, AsPath::empty()))
        } else {
            self.rib
                .get(&(at, prefix))
                .into_iter()
                .flatten()
                .map(|(peer, path)| (path.len(), peer.0, path.clone()))
                .min()
        };
        let old = self.best.get(&(at, prefix)).cloned();
        if old != best {
            self.changes.push((now, at));
            match best {
                Some(b) => self.best.insert((at, prefix), b),
                None => self.best.remove(&(at, prefix)),
            };
        }
    }

    fn apply(&mut self, e: &TraceEntry, collector: Option<Asn>) {
        let now = e.time;
        match &e.event {
            Event::Originate { asn, prefix } => {
                self.local.entry(*asn).or_default().push(*prefix);
                self.reselect(*asn, *prefix, now);
            }
            Event::Link { a, b, up } => {
                let l = self.links.entry(key(*a, *b)).or_insert((true, 0));
                if l.0 != *up {
                    *l = (*up, l.1 + 1);
                }
            }
            Event::Detect { at, peer, up: false } => {
                let prefixes: Vec<Prefix> = self
                    .rib
                    .iter_mut()
                    .filter(|((a, _), _)| a == at)
                    .filter_map(|((_, p), m)| m.remove(peer).map(|_| *p))
                    .collect();
                for p in prefixes {
                    self.reselect(*at, p, now);
                }
            }
            Event::Deliver { update, epoch, .. } => {
                if Some(update.receiver) == collector {
                    return;
                }
                let (up, current) = *self.links.entry(key(update.sender, update.receiver)).or_insert((true, 0));
                if !up || current != *epoch {
                    return;
                }
                self.deliveries.push(now);
                let rib = self.rib.entry((update.receiver, update.prefix())).or_default();
                match &update.kind {
                    UpdateKind::Announce { as_path, .. } if !as_path.contains(update.receiver) => {
                        rib.insert(update.sender, as_path.clone());
                    }
                    _ => {
                        rib.remove(&update.sender);
                    }
                }
                self.reselect(update.receiver, update.prefix(), now);
            }
            _ => {}
        }
    }
}

fn check(family: GraphFamily, n: u32, mrai: u64, seed: u64) {
    let spec = ScenarioSpec { family, n, penetration: 0.0, mrai: SimTime::from_secs(mrai), ..ScenarioSpec::default() };
    let sc = spec.build(seed).unwrap();
    let mut cfg = spec.network_config();
    cfg.record_trace = true;
    let run = run_failover(&sc, cfg).unwrap();

    let mut replay = Replay::default();
    for e in run.world.trace() {
        replay.apply(e, run.world.collector());
    }

    let sim_changes: Vec<(SimTime, Asn)> = run.world.state_changes().iter().map(|c| (c.time, c.asn)).collect();
    assert_eq!(replay.changes, sim_changes, "best-route change history");

    let trigger = run.trigger_time;
    let last_change = replay.changes.iter().map(|c| c.0).filter(|t| *t >= trigger).max().unwrap_or(trigger);
    let last_delivery = replay.deliveries.iter().copied().filter(|t| *t >= trigger).max().unwrap_or(trigger);
    let convergence = last_change.max(last_delivery).saturating_sub(trigger);
    assert_eq!(run.convergence_time(), convergence);

    let end = trigger + convergence;
    let counted = replay.deliveries.iter().filter(|t| **t >= trigger && **t <= end).count();
    let record = run.record(&sc, hrsim_core::metrics::RunMeta {
        family,
        n,
        penetration: 0,
        mrai: spec.mrai,
        crwi: spec.crwi,
        run: 0,
        seed,
    });
    assert_eq!(record.update_count, counted as u64);
    let rate = counted as f64 / convergence.as_secs_f64();
    assert!((record.churn_rate - rate).abs() < 1e-9, "{} vs {rate}", record.churn_rate);
    assert!(convergence > SimTime::ZERO);
}

#[test]
fn clique8_mrai30_matches_replay() {
    for seed in 0..4 {
        check(GraphFamily::Clique, 8, 30, seed);
    }
}

#[test]
fn clique8_mrai0_matches_replay() {
    check(GraphFamily::Clique, 8, 0, 7);
}

#[test]
fn other_families_match_replay() {
    for family in [GraphFamily::ErdosRenyi, GraphFamily::BarabasiAlbert, GraphFamily::NewmanWattsStrogatz] {
        check(family, 16, 30, 3);
    }
}

#[test]
fn quiescence_is_final() {
    for family in GraphFamily::ALL {
        let spec = ScenarioSpec { family, n: 16, penetration: 50.0, ..ScenarioSpec::default() };
        let sc = spec.build(11).unwrap();
        let mut run = run_failover(&sc, spec.network_config()).unwrap();
        let changes = run.world.state_changes().len();
        let log = run.world.update_log().len();
        let before = run.world.forwarding_table(sc.prefix);
        assert!(run.world.is_quiescent());
        let later = run.world.now() + SimTime::from_secs(3600);
        run.world.run_until(later);
        assert_eq!(run.world.state_changes().len(), changes);
        assert_eq!(run.world.update_log().len(), log);
        assert_eq!(run.world.forwarding_table(sc.prefix), before);
    }
}
