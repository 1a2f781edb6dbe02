//! The simulated internetwork: one BGP speaker per legacy AS, the controller
//! for all cluster ASes, an optional passive route collector, and the event
//! loop tying them together.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::{BgpSpeaker, BgpUpdate, Route, TimerId, TimerService, UpdateKind};
use crate::controller::{ChosenPath, Controller, ControllerConfig};
use crate::metrics::{Cause, Fwd, StateChange, UpdateLogEntry};
use crate::sim::{EventHandle, Scheduler, SimTime, Step};
use crate::topology::{Asn, Prefix, Role, Topology, DEFAULT_LINK_DELAY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub mrai: SimTime,
    pub controller: ControllerConfig,
    /// Added to the link delay of every message.
    pub processing_delay: SimTime,
    /// Time from a link changing state until its endpoints react.
    pub detection_delay: SimTime,
    /// Legacy speakers hold back routes whose path contains the peer.
    pub outbound_loop_check: bool,
    /// Periodic keep-alives; they never count as activity.
    pub keepalive: Option<SimTime>,
    pub record_trace: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            mrai: SimTime::from_secs(30),
            controller: ControllerConfig::default(),
            processing_delay: SimTime::from_millis(1),
            detection_delay: SimTime::ZERO,
            outbound_loop_check: true,
            keepalive: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("no link between {0} and {1}")]
    UnknownLink(Asn, Asn),
    #[error("simulation still active at the limit {0}")]
    LimitHit(SimTime),
    #[error("{0} has no role in the topology")]
    UnknownNode(Asn),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Speaker(Asn),
    Controller,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Originate { asn: Asn, prefix: Prefix },
    Deliver { update: BgpUpdate, sent: SimTime, epoch: u64, cause: Cause },
    Timer { owner: Owner, timer: TimerId },
    /// External command: a link changes state now.
    Link { a: Asn, b: Asn, up: bool },
    /// `at` notices that its link to `peer` changed state.
    Detect { at: Asn, peer: Asn, up: bool },
    /// A speaker exports what changed in its current input batch.
    Flush { asn: Asn },
    Keepalive { a: Asn, b: Asn },
}

fn changes_state(e: &Event) -> bool {
    !matches!(e, Event::Keepalive { .. })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: SimTime,
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LinkState {
    up: bool,
    epoch: u64,
    delay: SimTime,
}

struct Timers<'a> {
    sched: &'a mut Scheduler<Event>,
    owner: Owner,
}

impl TimerService for Timers<'_> {
    fn arm(&mut self, due: SimTime, timer: TimerId) -> EventHandle {
        self.sched
            .schedule(due, Event::Timer { owner: self.owner, timer })
            .expect("timers are armed at or after the current time")
    }

    fn cancel(&mut self, handle: EventHandle) -> bool {
        self.sched.cancel(handle)
    }
}

pub struct World {
    cfg: NetworkConfig,
    topology: Topology,
    sched: Scheduler<Event>,
    speakers: BTreeMap<Asn, BgpSpeaker>,
    controller: Controller,
    collector: Option<Asn>,
    links: BTreeMap<(Asn, Asn), LinkState>,
    flush_pending: BTreeSet<Asn>,
    log: Vec<UpdateLogEntry>,
    changes: Vec<StateChange>,
    trace: Vec<TraceEntry>,
    processed: u64,
    dropped: u64,
    looped_controller_adverts: u64,
    mrai_withdrawals: u64,
}

impl World {
    /// `prepends` overrides the per-session prepend count of a speaker
    /// towards one peer (default 1).
    pub fn new(
        topology: &Topology,
        prepends: &BTreeMap<(Asn, Asn), u32>,
        cfg: NetworkConfig,
    ) -> Result<World, NetworkError> {
        let members = topology.cluster_members();
        let collector = topology.nodes_with_role(Role::Collector).first().copied();
        let mut controller = Controller::new(cfg.controller, members.iter().copied());
        let mut speakers = BTreeMap::new();
        for (asn, role) in topology.nodes() {
            if matches!(role, Role::Legacy | Role::Client) {
                let mut s = BgpSpeaker::new(asn, cfg.mrai);
                s.set_outbound_loop_check(cfg.outbound_loop_check);
                if let Some(c) = collector {
                    s.add_passive_peer(c);
                }
                speakers.insert(asn, s);
            }
        }
        if let Some(c) = collector {
            for &m in &members {
                controller.add_passive_session(m, c);
            }
        }
        let mut links = BTreeMap::new();
        for (a, b, delay) in topology.links() {
            links.insert((a, b), LinkState { up: true, epoch: 0, delay });
            match (members.contains(&a), members.contains(&b)) {
                (true, true) => controller.add_cluster_link(a, b),
                (am, bm) => {
                    for (x, y, member) in [(a, b, am), (b, a, bm)] {
                        let prepend = prepends.get(&(x, y)).copied().unwrap_or(1);
                        if member {
                            controller.add_session(x, y, prepend);
                        } else {
                            speakers.get_mut(&x).ok_or(NetworkError::UnknownNode(x))?.add_peer(y, prepend);
                        }
                    }
                }
            }
        }
        let mut sched = Scheduler::new().with_classifier(changes_state);
        if let Some(interval) = cfg.keepalive {
            for &(a, b) in links.keys() {
                sched.schedule_in(interval, Event::Keepalive { a, b });
            }
        }
        Ok(World {
            cfg,
            topology: topology.clone(),
            sched,
            speakers,
            controller,
            collector,
            links,
            flush_pending: BTreeSet::new(),
            log: Vec::new(),
            changes: Vec::new(),
            trace: Vec::new(),
            processed: 0,
            dropped: 0,
            looped_controller_adverts: 0,
            mrai_withdrawals: 0,
        })
    }

    /// Schedules every origination in the topology at the current time.
    pub fn start(&mut self) {
        let now = self.sched.now();
        let originations: Vec<(Prefix, Asn)> = self.topology.originations().collect();
        for (prefix, asn) in originations {
            self.sched.schedule(now, Event::Originate { asn, prefix }).expect("now is never in the past");
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn speaker(&self, asn: Asn) -> Option<&BgpSpeaker> {
        self.speakers.get(&asn)
    }

    pub fn collector(&self) -> Option<Asn> {
        self.collector
    }

    pub fn update_log(&self) -> &[UpdateLogEntry] {
        &self.log
    }

    pub fn state_changes(&self) -> &[StateChange] {
        &self.changes
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    /// Messages discarded because their link went down while in flight.
    pub fn dropped_messages(&self) -> u64 {
        self.dropped
    }

    /// Controller announcements whose AS path revisits an AS.
    pub fn looped_controller_adverts(&self) -> u64 {
        self.looped_controller_adverts
    }

    /// Withdrawals sent from an MRAI expiry (should never happen).
    pub fn mrai_withdrawals(&self) -> u64 {
        self.mrai_withdrawals
    }

    pub fn is_quiescent(&self) -> bool {
        self.sched.pending_state_changes() == 0
    }

    /// Due time of the next queued event of any kind.
    pub fn next_due(&self) -> Option<SimTime> {
        self.sched.peek_due()
    }

    pub fn link_is_up(&self, a: Asn, b: Asn) -> Option<bool> {
        self.links.get(&ordered(a, b)).map(|l| l.up)
    }

    pub fn links(&self) -> impl Iterator<Item = (Asn, Asn, bool)> + '_ {
        self.links.iter().map(|(&(a, b), l)| (a, b, l.up))
    }

    /// Schedules a link change at `at` (not before now).
    pub fn schedule_link(&mut self, at: SimTime, a: Asn, b: Asn, up: bool) -> Result<(), NetworkError> {
        if !self.links.contains_key(&ordered(a, b)) {
            return Err(NetworkError::UnknownLink(a, b));
        }
        self.sched
            .schedule(at.max(self.sched.now()), Event::Link { a, b, up })
            .expect("clamped to the current time");
        Ok(())
    }

    /// Processes events up to the first quiescent instant.
    pub fn run_until_quiescent(&mut self, limit: SimTime) -> Result<SimTime, NetworkError> {
        loop {
            match self.sched.next_event(limit) {
                Step::Event(ev) => self.handle(ev.due, ev.seq, ev.kind),
                Step::Quiescent(t) => return Ok(t),
                Step::LimitHit => return Err(NetworkError::LimitHit(limit)),
            }
        }
    }

    /// Processes every event due no later than `until`, then moves the clock
    /// there. Used for wall-clock paced execution.
    pub fn run_until(&mut self, until: SimTime) {
        while let Some(ev) = self.sched.next_event_until(until) {
            self.handle(ev.due, ev.seq, ev.kind);
        }
        self.sched.advance_to(until);
    }

    /// Processes one event regardless of its kind.
    pub fn step(&mut self) -> Option<SimTime> {
        let ev = self.sched.next_event_until(SimTime::MAX)?;
        let due = ev.due;
        self.handle(ev.due, ev.seq, ev.kind);
        Some(due)
    }

    fn handle(&mut self, now: SimTime, seq: u64, event: Event) {
        self.processed += 1;
        if self.cfg.record_trace {
            self.trace.push(TraceEntry { time: now, seq, event: event.clone() });
        }
        match event {
            Event::Originate { asn, prefix } => self.originate(asn, prefix, now),
            Event::Deliver { update, sent, epoch, cause } => self.deliver(update, sent, epoch, cause, now),
            Event::Timer { owner, timer } => self.timer(owner, timer, now),
            Event::Link { a, b, up } => self.link_command(a, b, up, now),
            Event::Detect { at, peer, up } => self.detect(at, peer, up, now),
            Event::Flush { asn } => self.flush(asn, now),
            Event::Keepalive { a, b } => {
                if let (Some(interval), Some(true)) = (self.cfg.keepalive, self.link_is_up(a, b)) {
                    self.sched.schedule_in(interval, Event::Keepalive { a, b });
                }
            }
        }
    }

    fn originate(&mut self, asn: Asn, prefix: Prefix, now: SimTime) {
        if self.controller.is_member(asn) {
            let mut timers = Timers { sched: &mut self.sched, owner: Owner::Controller };
            self.controller.add_direct_prefix(prefix, asn, now, &mut timers);
            return;
        }
        let Some(speaker) = self.speakers.get_mut(&asn) else {
            log::warn!("origination of {prefix} at {asn}, which runs no speaker");
            return;
        };
        let before = speaker.best(prefix).cloned();
        let mut timers = Timers { sched: &mut self.sched, owner: Owner::Speaker(asn) };
        match speaker.originate(prefix, now, &mut timers) {
            Ok(out) => {
                let after = speaker.best(prefix).cloned();
                self.note_speaker_change(asn, prefix, before, after, now);
                self.send(out, Cause::Origination, now);
            }
            Err(e) => log::warn!("{e}"),
        }
    }

    fn deliver(&mut self, update: BgpUpdate, sent: SimTime, epoch: u64, cause: Cause, now: SimTime) {
        let to_collector = Some(update.receiver) == self.collector;
        if !to_collector {
            let link = self.links.get(&ordered(update.sender, update.receiver));
            if !link.is_some_and(|l| l.up && l.epoch == epoch) {
                self.dropped += 1;
                return;
            }
        }
        self.log.push(UpdateLogEntry::new(now, sent, &update, to_collector, cause));
        if to_collector {
            return;
        }
        let receiver = update.receiver;
        let prefix = update.prefix();
        if self.controller.is_member(receiver) {
            let mut timers = Timers { sched: &mut self.sched, owner: Owner::Controller };
            if let Err(e) = self.controller.ingest_external_update(&update, now, &mut timers) {
                log::warn!("dropping update: {e}");
            }
            return;
        }
        let Some(speaker) = self.speakers.get_mut(&receiver) else {
            log::warn!("update for {receiver}, which runs no speaker");
            return;
        };
        let before = speaker.best(prefix).cloned();
        match speaker.receive(&update) {
            Ok(_) => {
                let after = speaker.best(prefix).cloned();
                let unexported = speaker.has_unexported();
                self.note_speaker_change(receiver, prefix, before, after, now);
                // everything arriving at this instant is applied before the
                // speaker exports, as a router drains its input queue before
                // running the decision process
                if unexported && self.flush_pending.insert(receiver) {
                    self.sched.schedule(now, Event::Flush { asn: receiver }).expect("now is never in the past");
                }
            }
            Err(e) => log::warn!("dropping update: {e}"),
        }
    }

    fn flush(&mut self, asn: Asn, now: SimTime) {
        self.flush_pending.remove(&asn);
        let Some(speaker) = self.speakers.get_mut(&asn) else { return };
        let mut timers = Timers { sched: &mut self.sched, owner: Owner::Speaker(asn) };
        let out = speaker.flush(now, &mut timers);
        self.send(out, Cause::Update, now);
    }

    fn timer(&mut self, owner: Owner, timer: TimerId, now: SimTime) {
        match (owner, timer) {
            (Owner::Controller, TimerId::Crwi) => {
                let mut timers = Timers { sched: &mut self.sched, owner };
                self.controller.crwi_expiry(now, &mut timers);
            }
            (Owner::Controller, TimerId::Install) => {
                let mut timers = Timers { sched: &mut self.sched, owner };
                let report = self.controller.install_complete(now, &mut timers);
                for (asn, prefix) in report.changed {
                    self.changes.push(StateChange { time: now, asn, prefix });
                }
                self.send(report.updates, Cause::Install, now);
            }
            (Owner::Speaker(asn), TimerId::Mrai { peer, prefix }) => {
                let Some(speaker) = self.speakers.get_mut(&asn) else { return };
                let mut timers = Timers { sched: &mut self.sched, owner };
                if let Some(update) = speaker.mrai_expiry(peer, prefix, now, &mut timers) {
                    if update.kind.is_withdraw() {
                        self.mrai_withdrawals += 1;
                    }
                    self.send(vec![update], Cause::Mrai, now);
                }
            }
            (owner, timer) => log::warn!("timer {timer:?} fired for unexpected owner {owner:?}"),
        }
    }

    fn link_command(&mut self, a: Asn, b: Asn, up: bool, now: SimTime) {
        let Some(link) = self.links.get_mut(&ordered(a, b)) else { return };
        if link.up == up {
            return;
        }
        link.up = up;
        link.epoch += 1;
        let at = now + self.cfg.detection_delay;
        for (x, y) in [(a, b), (b, a)] {
            self.sched.schedule(at, Event::Detect { at: x, peer: y, up }).expect("detection is never in the past");
        }
    }

    fn detect(&mut self, at: Asn, peer: Asn, up: bool, now: SimTime) {
        if self.controller.is_member(at) {
            let mut timers = Timers { sched: &mut self.sched, owner: Owner::Controller };
            if self.controller.is_member(peer) {
                self.controller.handle_cluster_link_event(at, peer, up, now, &mut timers);
                return;
            }
            match self.controller.handle_external_session(at, peer, up, now, &mut timers) {
                Ok(out) => self.send(out, Cause::Link, now),
                Err(e) => log::warn!("{e}"),
            }
            return;
        }
        let Some(speaker) = self.speakers.get_mut(&at) else { return };
        let before = speaker.loc_rib().clone();
        let mut timers = Timers { sched: &mut self.sched, owner: Owner::Speaker(at) };
        match speaker.handle_link_event(peer, up, now, &mut timers) {
            Ok(out) => {
                let after = speaker.loc_rib();
                let touched: BTreeSet<Prefix> = before.keys().chain(after.keys()).copied().collect();
                let diffs: Vec<(Prefix, Option<Route>, Option<Route>)> = touched
                    .into_iter()
                    .filter(|p| before.get(p) != after.get(p))
                    .map(|p| (p, before.get(&p).cloned(), after.get(&p).cloned()))
                    .collect();
                for (prefix, b, a) in diffs {
                    self.note_speaker_change(at, prefix, b, a, now);
                }
                self.send(out, Cause::Link, now);
            }
            Err(e) => log::warn!("{e}"),
        }
    }

    fn note_speaker_change(&mut self, asn: Asn, prefix: Prefix, before: Option<Route>, after: Option<Route>, now: SimTime) {
        if before != after {
            self.changes.push(StateChange { time: now, asn, prefix });
        }
    }

    fn send(&mut self, updates: Vec<BgpUpdate>, cause: Cause, now: SimTime) {
        for update in updates {
            if cause == Cause::Install || self.controller.is_member(update.sender) {
                if let UpdateKind::Announce { as_path, .. } = &update.kind {
                    if as_path.has_loop() {
                        self.looped_controller_adverts += 1;
                    }
                }
            }
            let (delay, epoch) = if Some(update.receiver) == self.collector {
                (DEFAULT_LINK_DELAY, 0)
            } else {
                match self.links.get(&ordered(update.sender, update.receiver)) {
                    Some(l) if l.up => (l.delay, l.epoch),
                    _ => {
                        self.dropped += 1;
                        continue;
                    }
                }
            };
            let due = now + delay + self.cfg.processing_delay;
            self.sched
                .schedule(due, Event::Deliver { update, sent: now, epoch, cause })
                .expect("deliveries are in the future");
        }
    }

    /// Where `asn` currently forwards packets for `prefix`.
    pub fn forwarding_entry(&self, asn: Asn, prefix: Prefix) -> Fwd {
        let via = |n: Asn| if self.link_is_up(asn, n) == Some(true) { Fwd::Via(n) } else { Fwd::Stale(n) };
        if self.controller.is_member(asn) {
            return match self.controller.route(asn, prefix).map(ChosenPath::next_hop) {
                None => Fwd::NoRoute,
                Some(None) => Fwd::Local,
                Some(Some(n)) => via(n),
            };
        }
        match self.speakers.get(&asn).and_then(|s| s.best(prefix)) {
            None => Fwd::NoRoute,
            Some(Route { next_hop: None, .. }) => Fwd::Local,
            Some(Route { next_hop: Some(n), .. }) => via(*n),
        }
    }

    /// Forwarding entries of every AS except the collector.
    pub fn forwarding_table(&self, prefix: Prefix) -> BTreeMap<Asn, Fwd> {
        self.topology
            .nodes()
            .filter(|(_, r)| *r != Role::Collector)
            .map(|(a, _)| (a, self.forwarding_entry(a, prefix)))
            .collect()
    }

    /// Length of the AS path `asn` uses towards `prefix`, not counting
    /// `asn` itself.
    pub fn hop_count(&self, asn: Asn, prefix: Prefix) -> Option<u32> {
        if self.controller.is_member(asn) {
            return self.controller.route(asn, prefix).map(|p| p.cost);
        }
        self.speakers.get(&asn)?.best(prefix).map(|r| r.as_path.len() as u32)
    }
}

fn ordered(a: Asn, b: Asn) -> (Asn, Asn) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
