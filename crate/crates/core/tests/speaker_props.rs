use std::collections::BTreeMap;

use hrsim_core::bgp::{AsPath, BgpSpeaker, BgpUpdate, TimerId, TimerService, UpdateKind};
use hrsim_core::sim::{EventHandle, Scheduler, SimTime};
use hrsim_core::topology::{Asn, Prefix};
use proptest::prelude::*;

const ME: Asn = Asn(1);
const PEERS: [u32; 4] = [2, 3, 4, 5];
const MRAI: SimTime = SimTime::from_secs(30);

#[derive(Default)]
struct Timers(Scheduler<TimerId>);

impl TimerService for Timers {
    fn arm(&mut self, due: SimTime, timer: TimerId) -> EventHandle {
        self.0.schedule(due, timer).unwrap()
    }
    fn cancel(&mut self, handle: EventHandle) -> bool {
        self.0.cancel(handle)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Announce { peer: u32, prefix: u8, path: Vec<u32> },
    Withdraw { peer: u32, prefix: u8 },
    Link { peer: u32, up: bool },
    Wait(u64),
}

fn op() -> impl Strategy<Value = Op> {
    let peer = prop::sample::select(PEERS.to_vec());
    prop_oneof![
        6 => (peer.clone(), 0u8..2, prop::collection::vec(1u32..9, 0..5)).prop_map(|(peer, prefix, mut tail)| {
            let mut path = vec![peer];
            path.append(&mut tail);
            Op::Announce { peer, prefix, path }
        }),
        2 => (peer.clone(), 0u8..2).prop_map(|(peer, prefix)| Op::Withdraw { peer, prefix }),
        1 => (peer, any::<bool>()).prop_map(|(peer, up)| Op::Link { peer, up }),
        2 => (0u64..45).prop_map(Op::Wait),
    ]
}

fn prefix(i: u8) -> Prefix {
    format!("10.0.{i}.0/24").parse().unwrap()
}

/// Straight re-derivation of the decision process.
fn expected_best(rib: &BTreeMap<(u32, u8), Vec<u32>>, up: &BTreeMap<u32, bool>, p: u8) -> Option<(Vec<u32>, u32)> {
    rib.iter()
        .filter(|((peer, q), _)| *q == p && up[peer])
        .map(|((peer, _), path)| (path.len(), *peer, path.clone()))
        .min()
        .map(|(_, peer, path)| (path, peer))
}

struct Harness {
    s: BgpSpeaker,
    t: Timers,
    sent: Vec<(SimTime, BgpUpdate)>,
}

impl Harness {
    fn run_timers(&mut self, until: SimTime) -> Result<(), TestCaseError> {
        while let Some(ev) = self.t.0.next_event_until(until) {
            let TimerId::Mrai { peer, prefix } = ev.kind else { unreachable!() };
            if let Some(u) = self.s.mrai_expiry(peer, prefix, ev.due, &mut self.t) {
                prop_assert!(!u.kind.is_withdraw(), "withdrawal released by MRAI expiry");
                self.sent.push((ev.due, u));
            }
        }
        self.t.0.advance_to(until);
        Ok(())
    }
}

proptest! {
    #[test]
    fn speaker_tracks_the_decision_oracle(ops in prop::collection::vec(op(), 1..120)) {
        let mut h = Harness { s: BgpSpeaker::new(ME, MRAI), t: Timers::default(), sent: Vec::new() };
        for p in PEERS {
            h.s.add_peer(Asn(p), 1);
        }
        let mut rib: BTreeMap<(u32, u8), Vec<u32>> = BTreeMap::new();
        let mut up: BTreeMap<u32, bool> = PEERS.iter().map(|p| (*p, true)).collect();
        let mut last_down: BTreeMap<u32, SimTime> = BTreeMap::new();

        for op in ops {
            let now = h.t.0.now();
            match op {
                Op::Announce { peer, prefix: p, path } => {
                    if !up[&peer] { continue; }
                    let u = BgpUpdate::announce(Asn(peer), ME, prefix(p), AsPath::from(path.clone()));
                    let out = h.s.process_update(&u, now, &mut h.t).unwrap();
                    h.sent.extend(out.into_iter().map(|u| (now, u)));
                    if path.contains(&ME.0) { rib.remove(&(peer, p)); } else { rib.insert((peer, p), path); }
                }
                Op::Withdraw { peer, prefix: p } => {
                    if !up[&peer] { continue; }
                    let u = BgpUpdate::withdraw(Asn(peer), ME, prefix(p));
                    let out = h.s.process_update(&u, now, &mut h.t).unwrap();
                    h.sent.extend(out.into_iter().map(|u| (now, u)));
                    rib.remove(&(peer, p));
                }
                Op::Link { peer, up: state } => {
                    let out = h.s.handle_link_event(Asn(peer), state, now, &mut h.t).unwrap();
                    h.sent.extend(out.into_iter().map(|u| (now, u)));
                    if !state && up[&peer] {
                        rib.retain(|(q, _), _| *q != peer);
                        last_down.insert(peer, now);
                    }
                    up.insert(peer, state);
                }
                Op::Wait(secs) => h.run_timers(now + SimTime::from_secs(secs))?,
            }

            for ((peer, _), path) in h.s.adj_rib_in() {
                prop_assert!(!path.contains(ME), "{ME} stored a path through itself from {peer}");
            }
            for p in 0..2 {
                let best = h.s.best(prefix(p)).map(|r| (r.as_path.0.iter().map(|a| a.0).collect::<Vec<_>>(), r.next_hop.unwrap().0));
                prop_assert_eq!(best.clone(), expected_best(&rib, &up, p));
                // nothing that should be withdrawn is still advertised
                for &peer in &PEERS {
                    let wanted = best.as_ref().filter(|(path, _)| !path.contains(&peer));
                    if up[&peer] && wanted.is_none() {
                        prop_assert!(h.s.advertised(Asn(peer), prefix(p)).is_none());
                    }
                }
            }
        }

        // once every timer has fired, each up peer holds exactly the current best
        let end = h.t.0.now() + MRAI + MRAI;
        h.run_timers(end)?;
        for p in 0..2 {
            for &peer in &PEERS {
                if !up[&peer] { continue; }
                let want = expected_best(&rib, &up, p)
                    .filter(|(path, _)| !path.contains(&peer))
                    .map(|(path, _)| AsPath::from(path).prepended(ME, 1));
                prop_assert_eq!(h.s.advertised(Asn(peer), prefix(p)).cloned(), want);
            }
        }

        // announcements to one peer for one prefix respect the MRAI spacing,
        // except right after the session was reset
        let mut last: BTreeMap<(Asn, Prefix), SimTime> = BTreeMap::new();
        for (t, u) in &h.sent {
            if let UpdateKind::Announce { prefix, .. } = &u.kind {
                if let Some(prev) = last.insert((u.receiver, *prefix), *t) {
                    let reset = last_down.get(&u.receiver.0).is_some_and(|d| *d >= prev);
                    prop_assert!(reset || *t >= prev + MRAI, "announcements to {} at {prev} and {t}", u.receiver);
                }
            }
        }
    }

    #[test]
    fn mrai_zero_never_defers(paths in prop::collection::vec((prop::sample::select(PEERS.to_vec()), prop::collection::vec(6u32..9, 0..4)), 1..40)) {
        let mut s = BgpSpeaker::new(ME, SimTime::ZERO);
        for p in PEERS {
            s.add_peer(Asn(p), 1);
        }
        let mut t = Timers::default();
        for (peer, mut tail) in paths {
            let mut path = vec![peer];
            path.append(&mut tail);
            s.process_update(&BgpUpdate::announce(Asn(peer), ME, prefix(0), AsPath::from(path)), SimTime::ZERO, &mut t).unwrap();
            prop_assert!(t.0.is_empty(), "a timer was armed with MRAI 0");
            for &q in &PEERS {
                prop_assert!(s.pending(Asn(q), prefix(0)).is_none());
            }
        }
    }
}

#[test]
fn three_changes_in_one_window_send_only_the_last() {
    let mut s = BgpSpeaker::new(ME, MRAI);
    s.add_peer(Asn(2), 1);
    s.add_peer(Asn(9), 1);
    let mut t = Timers::default();
    let p = prefix(0);
    let first = s.process_update(&BgpUpdate::announce(Asn(2), ME, p, AsPath::from(vec![2, 7, 7, 7])), SimTime::ZERO, &mut t).unwrap();
    assert_eq!(first.len(), 1);
    for (i, path) in [vec![2, 7, 7], vec![2, 7], vec![2, 8]].into_iter().enumerate() {
        let now = SimTime::from_secs(i as u64 + 1);
        t.0.advance_to(now);
        let out = s.process_update(&BgpUpdate::announce(Asn(2), ME, p, AsPath::from(path)), now, &mut t).unwrap();
        assert!(out.is_empty());
    }
    let ev = t.0.next_event_until(SimTime::MAX).unwrap();
    assert_eq!(ev.due, MRAI);
    let TimerId::Mrai { peer, prefix } = ev.kind else { panic!() };
    let u = s.mrai_expiry(peer, prefix, ev.due, &mut t).unwrap();
    assert_eq!(u, BgpUpdate::announce(ME, Asn(9), p, AsPath::from(vec![1, 2, 8])));
    assert!(t.0.is_empty());
}
