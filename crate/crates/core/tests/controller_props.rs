use std::collections::{BTreeMap, BTreeSet};

use hrsim_core::bgp::{AsPath, BgpUpdate, TimerId, TimerService};
use hrsim_core::controller::{shortest_paths, AsGraph, Controller, ControllerConfig};
use hrsim_core::sim::{EventHandle, Scheduler, SimTime};
use hrsim_core::topology::{Asn, Prefix};
use proptest::prelude::*;

#[derive(Default)]
struct Timers {
    sched: Scheduler<TimerId>,
    crwi_armed: BTreeSet<EventHandle>,
}

impl TimerService for Timers {
    fn arm(&mut self, due: SimTime, timer: TimerId) -> EventHandle {
        let h = self.sched.schedule(due, timer).unwrap();
        if timer == TimerId::Crwi {
            self.crwi_armed.insert(h);
        }
        h
    }
    fn cancel(&mut self, handle: EventHandle) -> bool {
        self.crwi_armed.remove(&handle);
        self.sched.cancel(handle)
    }
}

fn prefix(i: u8) -> Prefix {
    format!("10.{i}.0.0/16").parse().unwrap()
}

#[derive(Debug, Clone)]
struct Case {
    k: u32,
    links: Vec<(u32, u32)>,
    sessions: Vec<(u32, u32)>,
    /// (session index, prefix, path tail, withdraw)
    updates: Vec<(usize, u8, Vec<u32>, bool)>,
}

const EXTERNAL: std::ops::Range<u32> = 10..16;

fn case() -> impl Strategy<Value = Case> {
    (2u32..=5).prop_flat_map(|k| {
        let links = prop::collection::vec((1..=k, 1..=k), 0..8);
        let sessions = prop::collection::vec((1..=k, EXTERNAL), 1..8);
        let updates = prop::collection::vec(
            (any::<usize>(), 0u8..2, prop::collection::vec(1u32..20, 0..6), prop::bool::weighted(0.15)),
            1..30,
        );
        (Just(k), links, sessions, updates).prop_map(|(k, links, sessions, updates)| Case { k, links, sessions, updates })
    })
}

/// Loop-free path starting at `peer`, never through `switch`.
fn clean_path(peer: u32, switch: u32, tail: &[u32]) -> AsPath {
    let mut seen = BTreeSet::from([peer, switch]);
    let mut v = vec![peer];
    for &a in tail {
        if seen.insert(a) {
            v.push(a);
        }
    }
    AsPath::from(v)
}

fn build(case: &Case) -> (Controller, Timers, usize) {
    let mut c = Controller::new(ControllerConfig::default(), (1..=case.k).map(Asn));
    for &(a, b) in &case.links {
        if a != b {
            c.add_cluster_link(Asn(a), Asn(b));
        }
    }
    let sessions: Vec<(u32, u32)> = case.sessions.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    for &(border, peer) in &sessions {
        c.add_session(Asn(border), Asn(peer), 1);
    }
    let mut t = Timers::default();
    let mut now = SimTime::ZERO;
    let mut max_crwi = 0;
    for (i, (s, p, tail, withdraw)) in case.updates.iter().enumerate() {
        let (border, peer) = sessions[s % sessions.len()];
        let update = if *withdraw {
            BgpUpdate::withdraw(Asn(peer), Asn(border), prefix(*p))
        } else {
            BgpUpdate::announce(Asn(peer), Asn(border), prefix(*p), clean_path(peer, border, tail))
        };
        c.ingest_external_update(&update, now, &mut t).unwrap();
        max_crwi = max_crwi.max(t.crwi_armed.len());
        // interleave timer processing every few updates
        if i % 4 == 3 {
            now += SimTime::from_millis(700);
            drain(&mut c, &mut t, now);
        }
    }
    drain(&mut c, &mut t, SimTime::MAX);
    (c, t, max_crwi)
}

fn drain(c: &mut Controller, t: &mut Timers, until: SimTime) {
    while let Some(ev) = t.sched.next_event_until(until) {
        match ev.kind {
            TimerId::Crwi => {
                t.crwi_armed.clear();
                c.crwi_expiry(ev.due, t)
            }
            TimerId::Install => {
                c.install_complete(ev.due, t);
            }
            TimerId::Mrai { .. } => unreachable!(),
        }
    }
    if until != SimTime::MAX {
        t.sched.advance_to(until);
    }
}

fn brute_force(g: &AsGraph) -> BTreeMap<Asn, u32> {
    fn walk(g: &AsGraph, at: Asn, cost: u32, seen: &mut Vec<Asn>, best: &mut Option<u32>) {
        if let Some(att) = g.attachments.get(&at) {
            let c = cost + att.len() as u32;
            *best = Some(best.map_or(c, |b| b.min(c)));
        }
        let next: Vec<(Asn, u32)> = g
            .intra
            .iter()
            .filter(|(a, _)| *a == at)
            .map(|(_, b)| (*b, 1))
            .chain(g.virtual_links.iter().filter(|((a, _), _)| *a == at).map(|((_, b), s)| (*b, s.len() as u32 + 1)))
            .collect();
        for (n, w) in next {
            if g.nodes.contains(&n) && !seen.contains(&n) {
                seen.push(n);
                walk(g, n, cost + w, seen, best);
                seen.pop();
            }
        }
    }
    g.nodes
        .iter()
        .filter_map(|&s| {
            let mut best = None;
            walk(g, s, 0, &mut vec![s], &mut best);
            best.map(|b| (s, b))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chosen_paths_expand_without_repeats(case in case()) {
        let (c, _, max_crwi) = build(&case);
        prop_assert!(max_crwi <= 1, "{max_crwi} CRWI timers armed at once");
        for p in 0..2 {
            if let Some(routes) = c.installed(prefix(p)) {
                for (asn, path) in routes {
                    let expanded = path.expand(*asn);
                    prop_assert!(!expanded.has_loop(), "{asn}: {expanded:?}");
                    prop_assert_eq!(path.cost as usize, expanded.len() - 1);
                }
            }
        }
        for (border, peer, _, path) in c.external_advertisements() {
            prop_assert!(!path.has_loop(), "{border}->{peer}: {path:?}");
            prop_assert_eq!(path.first(), Some(border));
        }
    }

    #[test]
    fn annotations_are_hop_count_minimal(case in case()) {
        let (c, _, _) = build(&case);
        let sg = c.switch_graph();
        for s in 1..=case.k {
            for p in 0..2 {
                let min = c.path_store().candidates(Asn(s), prefix(p)).map(|(_, path)| path.len()).min();
                prop_assert_eq!(sg.annotation(Asn(s), prefix(p)).map(|a| a.len()), min);
            }
        }
    }

    #[test]
    fn dijkstra_matches_exhaustive_search(case in case()) {
        let (c, _, _) = build(&case);
        for p in 0..2 {
            let g = c.transform(prefix(p)).graph;
            let got: BTreeMap<Asn, u32> = shortest_paths(&g).into_iter().map(|(a, path)| (a, path.cost)).collect();
            prop_assert_eq!(got, brute_force(&g));
        }
    }
}
