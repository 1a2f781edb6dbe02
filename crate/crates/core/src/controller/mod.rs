//! Multi-AS SDN controller.
//!
//! The controller owns every cluster AS. External BGP sessions of cluster
//! members terminate at a single cluster BGP speaker which presents each
//! border AS under its own ASN. Learned paths go into a [`PathStore`];
//! recomputation is batched behind the CRWI, forwarding state is installed
//! after a modeled delay and only then are changes advertised outside.

mod graph;
mod paths;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{transform, AsGraph, PathStore, SwitchGraph, Transformed};
pub use paths::{compute_paths, shortest_paths, ChosenPath, Hop};

use crate::bgp::{AsPath, BgpUpdate, TimerId, TimerService, UpdateKind};
use crate::sim::{EventHandle, SimTime};
use crate::topology::{Asn, Prefix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Cluster Waiting Recomputation Interval.
    pub crwi: SimTime,
    /// Lumped flow-rule installation delay applied to every recompute.
    pub install_delay: SimTime,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { crwi: SimTime::from_secs(1), install_delay: SimTime::from_millis(300) }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControllerError {
    #[error("{0} is not a cluster member")]
    NotAMember(Asn),
    #[error("no established session between {border} and {peer}")]
    UnknownSession { border: Asn, peer: Asn },
}

/// Pending recomputation work accumulated while the CRWI runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecomputeQueue {
    full: bool,
    dirty: BTreeSet<Prefix>,
    crwi_timer: Option<EventHandle>,
}

impl RecomputeQueue {
    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn dirty(&self) -> &BTreeSet<Prefix> {
        &self.dirty
    }

    pub fn is_empty(&self) -> bool {
        !self.full && self.dirty.is_empty()
    }

    pub fn timer(&self) -> Option<EventHandle> {
        self.crwi_timer
    }

    fn mark(&mut self, prefix: Prefix) {
        if !self.full {
            self.dirty.insert(prefix);
        }
    }

    fn mark_full(&mut self) {
        self.full = true;
        self.dirty.clear();
    }
}

/// One executed recomputation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecomputeRecord {
    pub at: SimTime,
    pub full: bool,
    pub prefixes: Vec<Prefix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Session {
    up: bool,
    prepend: u32,
    passive: bool,
}

#[derive(Debug, Clone)]
struct InstallBatch {
    routes: BTreeMap<Prefix, BTreeMap<Asn, ChosenPath>>,
}

/// What an installation produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstallReport {
    pub updates: Vec<BgpUpdate>,
    /// `(cluster AS, prefix)` pairs whose forwarding entry changed.
    pub changed: Vec<(Asn, Prefix)>,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    members: BTreeSet<Asn>,
    links: BTreeMap<(Asn, Asn), bool>,
    sessions: BTreeMap<(Asn, Asn), Session>,
    store: PathStore,
    direct: BTreeMap<Prefix, Asn>,
    queue: RecomputeQueue,
    references: BTreeMap<Prefix, BTreeSet<(Asn, Asn)>>,
    installing: Option<InstallBatch>,
    installed: BTreeMap<Prefix, BTreeMap<Asn, ChosenPath>>,
    adj_rib_out: BTreeMap<(Asn, Asn, Prefix), AsPath>,
    history: Vec<RecomputeRecord>,
    dropped_virtual_links: usize,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, members: impl IntoIterator<Item = Asn>) -> Self {
        Controller {
            cfg,
            members: members.into_iter().collect(),
            links: BTreeMap::new(),
            sessions: BTreeMap::new(),
            store: PathStore::new(),
            direct: BTreeMap::new(),
            queue: RecomputeQueue::default(),
            references: BTreeMap::new(),
            installing: None,
            installed: BTreeMap::new(),
            adj_rib_out: BTreeMap::new(),
            history: Vec::new(),
            dropped_virtual_links: 0,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn members(&self) -> &BTreeSet<Asn> {
        &self.members
    }

    pub fn is_member(&self, asn: Asn) -> bool {
        self.members.contains(&asn)
    }

    /// Physical link between two cluster members, initially up.
    pub fn add_cluster_link(&mut self, a: Asn, b: Asn) {
        self.links.insert(ordered(a, b), true);
    }

    /// eBGP session between border AS `border` and an external `peer`.
    pub fn add_session(&mut self, border: Asn, peer: Asn, prepend: u32) {
        self.sessions.insert((border, peer), Session { up: true, prepend: prepend.max(1), passive: false });
    }

    /// Monitoring session towards a route collector.
    pub fn add_passive_session(&mut self, border: Asn, collector: Asn) {
        self.sessions.insert((border, collector), Session { up: true, prepend: 1, passive: true });
    }

    pub fn add_direct_prefix(&mut self, prefix: Prefix, at: Asn, now: SimTime, timers: &mut dyn TimerService) {
        self.direct.insert(prefix, at);
        self.mark_dirty(prefix, now, timers);
    }

    pub fn path_store(&self) -> &PathStore {
        &self.store
    }

    pub fn queue(&self) -> &RecomputeQueue {
        &self.queue
    }

    pub fn history(&self) -> &[RecomputeRecord] {
        &self.history
    }

    pub fn dropped_virtual_links(&self) -> usize {
        self.dropped_virtual_links
    }

    pub fn is_installing(&self) -> bool {
        self.installing.is_some()
    }

    pub fn installed(&self, prefix: Prefix) -> Option<&BTreeMap<Asn, ChosenPath>> {
        self.installed.get(&prefix)
    }

    pub fn route(&self, asn: Asn, prefix: Prefix) -> Option<&ChosenPath> {
        self.installed.get(&prefix)?.get(&asn)
    }

    pub fn advertised(&self, border: Asn, peer: Asn, prefix: Prefix) -> Option<&AsPath> {
        self.adj_rib_out.get(&(border, peer, prefix))
    }

    /// Directed switch adjacencies currently up.
    pub fn switch_edges(&self) -> BTreeSet<(Asn, Asn)> {
        self.links
            .iter()
            .filter(|(_, up)| **up)
            .flat_map(|(&(a, b), _)| [(a, b), (b, a)])
            .collect()
    }

    pub fn switch_graph(&self) -> SwitchGraph {
        SwitchGraph::build(&self.members, &self.switch_edges(), &self.store, &self.direct)
    }

    pub fn transform(&self, prefix: Prefix) -> Transformed {
        transform(&self.switch_graph(), &self.store, &self.direct, prefix)
    }

    fn known_prefixes(&self) -> BTreeSet<Prefix> {
        let mut all = self.store.prefixes();
        all.extend(self.direct.keys().copied());
        all.extend(self.installed.keys().copied());
        all
    }

    fn session_up(&self, border: Asn, peer: Asn) -> bool {
        self.sessions.get(&(border, peer)).is_some_and(|s| s.up)
    }

    /// An update from external `update.sender` arriving at cluster member
    /// `update.receiver`.
    pub fn ingest_external_update(
        &mut self,
        update: &BgpUpdate,
        now: SimTime,
        timers: &mut dyn TimerService,
    ) -> Result<(), ControllerError> {
        let (switch, peer) = (update.receiver, update.sender);
        if !self.is_member(switch) {
            return Err(ControllerError::NotAMember(switch));
        }
        if !self.session_up(switch, peer) {
            return Err(ControllerError::UnknownSession { border: switch, peer });
        }
        let prefix = update.prefix();
        let before = self.store.best(switch, prefix);
        let changed = match &update.kind {
            // a path already carrying the border's own ASN is a loop for that AS
            UpdateKind::Announce { as_path, .. } if as_path.contains(switch) => {
                self.store.remove(switch, peer, prefix).is_some()
            }
            UpdateKind::Announce { as_path, .. } => {
                self.store.insert(switch, peer, prefix, as_path.clone()).as_ref() != Some(as_path)
            }
            UpdateKind::Withdraw { .. } => self.store.remove(switch, peer, prefix).is_some(),
        };
        if changed {
            self.after_store_change(switch, peer, prefix, before, now, timers);
        }
        Ok(())
    }

    fn after_store_change(
        &mut self,
        switch: Asn,
        peer: Asn,
        prefix: Prefix,
        best_before: Option<AsPath>,
        now: SimTime,
        timers: &mut dyn TimerService,
    ) {
        let best_changed = self.store.best(switch, prefix) != best_before;
        let referenced = self.references.get(&prefix).is_some_and(|r| r.contains(&(switch, peer)));
        if best_changed || referenced {
            self.mark_dirty(prefix, now, timers);
        }
    }

    /// Session state change on an external link of a border AS.
    pub fn handle_external_session(
        &mut self,
        border: Asn,
        peer: Asn,
        up: bool,
        now: SimTime,
        timers: &mut dyn TimerService,
    ) -> Result<Vec<BgpUpdate>, ControllerError> {
        let Some(session) = self.sessions.get_mut(&(border, peer)) else {
            return Err(ControllerError::UnknownSession { border, peer });
        };
        if session.up == up {
            return Ok(Vec::new());
        }
        session.up = up;
        let mut out = Vec::new();
        if up {
            let prefixes: Vec<Prefix> = self.installed.keys().copied().collect();
            for prefix in prefixes {
                self.export(border, peer, prefix, &mut out);
            }
            return Ok(out);
        }
        self.adj_rib_out.retain(|(b, p, _), _| !(*b == border && *p == peer));
        let prefixes: BTreeSet<Prefix> =
            self.store.candidates_for_session(border, peer).collect::<BTreeSet<_>>();
        for prefix in prefixes {
            let before = self.store.best(border, prefix);
            self.store.remove(border, peer, prefix);
            self.after_store_change(border, peer, prefix, before, now, timers);
        }
        Ok(out)
    }

    /// Link between two cluster members changed state.
    pub fn handle_cluster_link_event(&mut self, a: Asn, b: Asn, up: bool, now: SimTime, timers: &mut dyn TimerService) {
        let Some(state) = self.links.get_mut(&ordered(a, b)) else {
            log::warn!("ignoring event for unknown cluster link {a}-{b}");
            return;
        };
        if *state == up {
            return;
        }
        *state = up;
        self.queue.mark_full();
        self.arm_crwi(now, timers);
    }

    fn mark_dirty(&mut self, prefix: Prefix, now: SimTime, timers: &mut dyn TimerService) {
        self.queue.mark(prefix);
        self.arm_crwi(now, timers);
    }

    fn arm_crwi(&mut self, now: SimTime, timers: &mut dyn TimerService) {
        if self.queue.crwi_timer.is_none() && self.installing.is_none() && !self.queue.is_empty() {
            self.queue.crwi_timer = Some(timers.arm(now + self.cfg.crwi, TimerId::Crwi));
        }
    }

    /// Per-prefix pipeline: Switch Graph, AS Graph, shortest paths.
    pub fn recompute(&mut self, prefix: Prefix) -> BTreeMap<Asn, ChosenPath> {
        let Transformed { graph, references } = self.transform(prefix);
        let (paths, dropped) = compute_paths(&graph);
        self.dropped_virtual_links += dropped.len();
        self.references.insert(prefix, references);
        paths
    }

    /// CRWI fired: recompute queued prefixes and start installing the result.
    pub fn crwi_expiry(&mut self, now: SimTime, timers: &mut dyn TimerService) {
        self.queue.crwi_timer = None;
        if self.queue.is_empty() {
            return;
        }
        let queue = std::mem::take(&mut self.queue);
        let prefixes: Vec<Prefix> =
            if queue.full { self.known_prefixes().into_iter().collect() } else { queue.dirty.into_iter().collect() };
        let routes: BTreeMap<Prefix, BTreeMap<Asn, ChosenPath>> =
            prefixes.iter().map(|&p| (p, self.recompute(p))).collect();
        self.history.push(RecomputeRecord { at: now, full: queue.full, prefixes });
        timers.arm(now + self.cfg.install_delay, TimerId::Install);
        self.installing = Some(InstallBatch { routes });
    }

    /// Forwarding state of the last recompute is now in place; advertise.
    pub fn install_complete(&mut self, now: SimTime, timers: &mut dyn TimerService) -> InstallReport {
        let mut report = InstallReport::default();
        let Some(batch) = self.installing.take() else {
            return report;
        };
        for (prefix, routes) in batch.routes {
            let old = self.installed.remove(&prefix).unwrap_or_default();
            for asn in old.keys().chain(routes.keys()).collect::<BTreeSet<_>>() {
                if old.get(asn) != routes.get(asn) {
                    report.changed.push((*asn, prefix));
                }
            }
            if !routes.is_empty() {
                self.installed.insert(prefix, routes);
            }
            let sessions: Vec<(Asn, Asn)> = self.sessions.iter().filter(|(_, s)| s.up).map(|(k, _)| *k).collect();
            for (border, peer) in sessions {
                self.export(border, peer, prefix, &mut report.updates);
            }
        }
        self.arm_crwi(now, timers);
        report
    }

    fn export(&mut self, border: Asn, peer: Asn, prefix: Prefix, out: &mut Vec<BgpUpdate>) {
        let Some(session) = self.sessions.get(&(border, peer)).copied() else { return };
        if !session.up {
            return;
        }
        let key = (border, peer, prefix);
        // no sender-side loop filtering: the peer's own loop check discards
        // paths that already contain it
        let desired = self.route(border, prefix).map(|path| {
            let expanded = path.expand(border);
            AsPath::new(expanded.hops()[1..].to_vec()).prepended(border, session.prepend)
        });
        match desired {
            Some(path) => {
                if self.adj_rib_out.get(&key) != Some(&path) {
                    self.adj_rib_out.insert(key, path.clone());
                    out.push(BgpUpdate::announce(border, peer, prefix, path));
                }
            }
            None => {
                if self.adj_rib_out.remove(&key).is_some() {
                    out.push(BgpUpdate::withdraw(border, peer, prefix));
                }
            }
        }
    }

    /// Routes currently advertised to external, non-monitoring peers.
    pub fn external_advertisements(&self) -> impl Iterator<Item = (Asn, Asn, Prefix, &AsPath)> + '_ {
        self.adj_rib_out
            .iter()
            .filter(|((b, p, _), _)| self.sessions.get(&(*b, *p)).is_some_and(|s| !s.passive))
            .map(|((b, p, prefix), path)| (*b, *p, *prefix, path))
    }
}

impl PathStore {
    fn candidates_for_session(&self, switch: Asn, peer: Asn) -> impl Iterator<Item = Prefix> + '_ {
        self.prefixes().into_iter().filter(move |prefix| self.get(switch, peer, *prefix).is_some())
    }
}

fn ordered(a: Asn, b: Asn) -> (Asn, Asn) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
