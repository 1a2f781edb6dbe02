//! Path-vector BGP speaker for a legacy AS.
//!
//! Shortest AS path wins; ties go to the lowest next-hop ASN, then to the
//! lexicographically smallest path. Announcements are rate-limited per
//! `(peer, prefix)` by the MRAI; withdrawals always go out immediately.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{EventHandle, SimTime};
use crate::topology::{Asn, Prefix};

/// AS sequence, leftmost entry is the most recent hop.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AsPath(pub Vec<Asn>);

impl AsPath {
    pub fn new(hops: Vec<Asn>) -> Self {
        AsPath(hops)
    }

    pub fn empty() -> Self {
        AsPath(Vec::new())
    }

    /// Hop count; repeated (prepended) entries count individually.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.0.contains(&asn)
    }

    pub fn first(&self) -> Option<Asn> {
        self.0.first().copied()
    }

    pub fn hops(&self) -> &[Asn] {
        &self.0
    }

    /// `count` copies of `asn` followed by this path.
    pub fn prepended(&self, asn: Asn, count: u32) -> AsPath {
        let mut v = Vec::with_capacity(self.0.len() + count as usize);
        v.extend(std::iter::repeat_n(asn, count as usize));
        v.extend_from_slice(&self.0);
        AsPath(v)
    }

    /// True if some ASN appears in two non-adjacent positions, i.e. the path
    /// visits an AS, leaves it and comes back. Consecutive repeats from
    /// prepending are fine.
    pub fn has_loop(&self) -> bool {
        let mut seen = BTreeSet::new();
        let mut prev = None;
        for &a in &self.0 {
            if prev != Some(a) && !seen.insert(a) {
                return true;
            }
            prev = Some(a);
        }
        false
    }
}

impl fmt::Display for AsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", a.0)?;
        }
        f.write_str("]")
    }
}

impl From<Vec<u32>> for AsPath {
    fn from(v: Vec<u32>) -> Self {
        AsPath(v.into_iter().map(Asn).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UpdateKind {
    Announce { prefix: Prefix, as_path: AsPath },
    Withdraw { prefix: Prefix },
}

impl UpdateKind {
    pub fn prefix(&self) -> Prefix {
        match self {
            UpdateKind::Announce { prefix, .. } | UpdateKind::Withdraw { prefix } => *prefix,
        }
    }

    pub fn is_withdraw(&self) -> bool {
        matches!(self, UpdateKind::Withdraw { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BgpUpdate {
    pub sender: Asn,
    pub receiver: Asn,
    #[serde(flatten)]
    pub kind: UpdateKind,
}

impl BgpUpdate {
    pub fn announce(sender: Asn, receiver: Asn, prefix: Prefix, as_path: AsPath) -> Self {
        BgpUpdate { sender, receiver, kind: UpdateKind::Announce { prefix, as_path } }
    }

    pub fn withdraw(sender: Asn, receiver: Asn, prefix: Prefix) -> Self {
        BgpUpdate { sender, receiver, kind: UpdateKind::Withdraw { prefix } }
    }

    pub fn prefix(&self) -> Prefix {
        self.kind.prefix()
    }
}

/// Timers owned by a routing entity. The entity keeps the handles and cancels
/// them itself; the event loop routes expiries back to the owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimerId {
    Mrai { peer: Asn, prefix: Prefix },
    Crwi,
    Install,
}

pub trait TimerService {
    fn arm(&mut self, due: SimTime, timer: TimerId) -> EventHandle;
    fn cancel(&mut self, handle: EventHandle) -> bool;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BgpError {
    #[error("{receiver} has no session with {sender}")]
    UnknownSession { receiver: Asn, sender: Asn },
    #[error("update addressed to {addressed} delivered to {actual}")]
    WrongReceiver { addressed: Asn, actual: Asn },
    #[error("{asn} already originates {prefix}")]
    DuplicateOrigination { asn: Asn, prefix: Prefix },
}

/// Selected route. `next_hop == None` means locally originated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub as_path: AsPath,
    pub next_hop: Option<Asn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Peer {
    up: bool,
    prepend: u32,
    /// Monitoring session: no outbound loop check applies.
    passive: bool,
}

#[derive(Debug, Clone)]
pub struct BgpSpeaker {
    asn: Asn,
    mrai: SimTime,
    outbound_loop_check: bool,
    peers: BTreeMap<Asn, Peer>,
    originated: BTreeSet<Prefix>,
    adj_rib_in: BTreeMap<(Asn, Prefix), AsPath>,
    loc_rib: BTreeMap<Prefix, Route>,
    adj_rib_out: BTreeMap<(Asn, Prefix), AsPath>,
    last_announce: BTreeMap<(Asn, Prefix), SimTime>,
    mrai_timers: BTreeMap<(Asn, Prefix), EventHandle>,
    pending: BTreeMap<(Asn, Prefix), AsPath>,
    /// Prefixes whose best route changed since the last export.
    unexported: BTreeSet<Prefix>,
}

impl BgpSpeaker {
    pub fn new(asn: Asn, mrai: SimTime) -> Self {
        BgpSpeaker {
            asn,
            mrai,
            outbound_loop_check: true,
            peers: BTreeMap::new(),
            originated: BTreeSet::new(),
            adj_rib_in: BTreeMap::new(),
            loc_rib: BTreeMap::new(),
            adj_rib_out: BTreeMap::new(),
            last_announce: BTreeMap::new(),
            mrai_timers: BTreeMap::new(),
            pending: BTreeMap::new(),
            unexported: BTreeSet::new(),
        }
    }

    /// Suppress announcements whose path already contains the peer (sending
    /// a withdrawal instead, if something had been advertised). Enabled by
    /// default, as in Quagga.
    pub fn set_outbound_loop_check(&mut self, enabled: bool) {
        self.outbound_loop_check = enabled;
    }

    /// Registers a session in the established state.
    pub fn add_peer(&mut self, peer: Asn, prepend: u32) {
        self.peers.insert(peer, Peer { up: true, prepend: prepend.max(1), passive: false });
    }

    /// Registers a monitoring session (route collector).
    pub fn add_passive_peer(&mut self, peer: Asn) {
        self.peers.insert(peer, Peer { up: true, prepend: 1, passive: true });
    }

    pub fn asn(&self) -> Asn {
        self.asn
    }

    pub fn mrai(&self) -> SimTime {
        self.mrai
    }

    pub fn best(&self, prefix: Prefix) -> Option<&Route> {
        self.loc_rib.get(&prefix)
    }

    pub fn loc_rib(&self) -> &BTreeMap<Prefix, Route> {
        &self.loc_rib
    }

    pub fn adj_rib_in(&self) -> &BTreeMap<(Asn, Prefix), AsPath> {
        &self.adj_rib_in
    }

    pub fn advertised(&self, peer: Asn, prefix: Prefix) -> Option<&AsPath> {
        self.adj_rib_out.get(&(peer, prefix))
    }

    pub fn pending(&self, peer: Asn, prefix: Prefix) -> Option<&AsPath> {
        self.pending.get(&(peer, prefix))
    }

    pub fn mrai_timer(&self, peer: Asn, prefix: Prefix) -> Option<EventHandle> {
        self.mrai_timers.get(&(peer, prefix)).copied()
    }

    pub fn peer_is_up(&self, peer: Asn) -> bool {
        self.peers.get(&peer).is_some_and(|p| p.up)
    }

    pub fn peers(&self) -> impl Iterator<Item = Asn> + '_ {
        self.peers.keys().copied()
    }

    pub fn originates(&self, prefix: Prefix) -> bool {
        self.originated.contains(&prefix)
    }

    /// Applies one update and immediately exports any resulting change.
    pub fn process_update(
        &mut self,
        update: &BgpUpdate,
        now: SimTime,
        timers: &mut dyn TimerService,
    ) -> Result<Vec<BgpUpdate>, BgpError> {
        self.receive(update)?;
        Ok(self.flush(now, timers))
    }

    /// Applies one update to the RIBs without exporting. Returns whether the
    /// best route changed; the change is exported by the next [`flush`].
    ///
    /// [`flush`]: BgpSpeaker::flush
    pub fn receive(&mut self, update: &BgpUpdate) -> Result<bool, BgpError> {
        if update.receiver != self.asn {
            return Err(BgpError::WrongReceiver { addressed: update.receiver, actual: self.asn });
        }
        if !self.peer_is_up(update.sender) {
            return Err(BgpError::UnknownSession { receiver: self.asn, sender: update.sender });
        }
        let prefix = update.prefix();
        let key = (update.sender, prefix);
        match &update.kind {
            UpdateKind::Announce { as_path, .. } if as_path.contains(self.asn) => {
                self.adj_rib_in.remove(&key);
            }
            UpdateKind::Announce { as_path, .. } => {
                self.adj_rib_in.insert(key, as_path.clone());
            }
            UpdateKind::Withdraw { .. } => {
                self.adj_rib_in.remove(&key);
            }
        }
        let changed = self.reselect(prefix);
        if changed {
            self.unexported.insert(prefix);
        }
        Ok(changed)
    }

    /// Exports every prefix whose best route changed since the last flush.
    pub fn flush(&mut self, now: SimTime, timers: &mut dyn TimerService) -> Vec<BgpUpdate> {
        let mut out = Vec::new();
        for prefix in std::mem::take(&mut self.unexported) {
            self.export_all(prefix, now, timers, &mut out);
        }
        out
    }

    pub fn has_unexported(&self) -> bool {
        !self.unexported.is_empty()
    }

    pub fn originate(
        &mut self,
        prefix: Prefix,
        now: SimTime,
        timers: &mut dyn TimerService,
    ) -> Result<Vec<BgpUpdate>, BgpError> {
        if !self.originated.insert(prefix) {
            return Err(BgpError::DuplicateOrigination { asn: self.asn, prefix });
        }
        let mut out = Vec::new();
        if self.reselect(prefix) {
            self.export_all(prefix, now, timers, &mut out);
        }
        Ok(out)
    }

    pub fn handle_link_event(
        &mut self,
        peer: Asn,
        up: bool,
        now: SimTime,
        timers: &mut dyn TimerService,
    ) -> Result<Vec<BgpUpdate>, BgpError> {
        let Some(state) = self.peers.get_mut(&peer) else {
            return Err(BgpError::UnknownSession { receiver: self.asn, sender: peer });
        };
        let mut out = Vec::new();
        if state.up == up {
            return Ok(out);
        }
        state.up = up;
        if up {
            let prefixes: Vec<Prefix> = self.loc_rib.keys().copied().collect();
            for prefix in prefixes {
                self.export(prefix, peer, now, timers, &mut out);
            }
            return Ok(out);
        }

        let stale: Vec<(Asn, Prefix)> = self.mrai_timers.keys().filter(|(p, _)| *p == peer).copied().collect();
        for key in stale {
            if let Some(h) = self.mrai_timers.remove(&key) {
                timers.cancel(h);
            }
        }
        self.pending.retain(|(p, _), _| *p != peer);
        self.adj_rib_out.retain(|(p, _), _| *p != peer);
        self.last_announce.retain(|(p, _), _| *p != peer);

        let affected: BTreeSet<Prefix> =
            self.adj_rib_in.keys().filter(|(p, _)| *p == peer).map(|(_, prefix)| *prefix).collect();
        self.adj_rib_in.retain(|(p, _), _| *p != peer);
        for prefix in affected {
            if self.reselect(prefix) {
                self.export_all(prefix, now, timers, &mut out);
            }
        }
        Ok(out)
    }

    /// MRAI expiry for `(peer, prefix)`: flushes the coalesced pending
    /// announcement, if any.
    pub fn mrai_expiry(
        &mut self,
        peer: Asn,
        prefix: Prefix,
        now: SimTime,
        _timers: &mut dyn TimerService,
    ) -> Option<BgpUpdate> {
        let key = (peer, prefix);
        self.mrai_timers.remove(&key);
        let path = self.pending.remove(&key)?;
        if !self.peer_is_up(peer) {
            return None;
        }
        self.adj_rib_out.insert(key, path.clone());
        self.last_announce.insert(key, now);
        Some(BgpUpdate::announce(self.asn, peer, prefix, path))
    }

    fn candidates(&self, prefix: Prefix) -> impl Iterator<Item = Route> + '_ {
        let local = self.originated.contains(&prefix).then(|| Route { as_path: AsPath::empty(), next_hop: None });
        let learned = self
            .adj_rib_in
            .iter()
            .filter(move |((peer, p), _)| *p == prefix && self.peer_is_up(*peer))
            .map(|((peer, _), path)| Route { as_path: path.clone(), next_hop: Some(*peer) });
        local.into_iter().chain(learned)
    }

    /// Decision process over the current candidates. Returns true if the
    /// selected route changed.
    fn reselect(&mut self, prefix: Prefix) -> bool {
        let best = self
            .candidates(prefix)
            .min_by(|a, b| {
                (a.as_path.len(), a.next_hop.map_or(0, |n| n.0), &a.as_path).cmp(&(
                    b.as_path.len(),
                    b.next_hop.map_or(0, |n| n.0),
                    &b.as_path,
                ))
            });
        let current = self.loc_rib.get(&prefix);
        if current == best.as_ref() {
            return false;
        }
        match best {
            Some(r) => self.loc_rib.insert(prefix, r),
            None => self.loc_rib.remove(&prefix),
        };
        true
    }

    fn export_all(&mut self, prefix: Prefix, now: SimTime, timers: &mut dyn TimerService, out: &mut Vec<BgpUpdate>) {
        self.unexported.remove(&prefix);
        let peers: Vec<Asn> = self.peers.iter().filter(|(_, p)| p.up).map(|(a, _)| *a).collect();
        for peer in peers {
            self.export(prefix, peer, now, timers, out);
        }
    }

    fn export(
        &mut self,
        prefix: Prefix,
        peer: Asn,
        now: SimTime,
        timers: &mut dyn TimerService,
        out: &mut Vec<BgpUpdate>,
    ) {
        let Some(cfg) = self.peers.get(&peer).copied() else { return };
        if !cfg.up {
            return;
        }
        let key = (peer, prefix);
        let desired = self.loc_rib.get(&prefix).and_then(|route| {
            if self.outbound_loop_check && !cfg.passive && route.as_path.contains(peer) {
                None
            } else {
                Some(route.as_path.prepended(self.asn, cfg.prepend))
            }
        });

        let Some(path) = desired else {
            self.drop_pending(key, timers);
            if self.adj_rib_out.remove(&key).is_some() {
                out.push(BgpUpdate::withdraw(self.asn, peer, prefix));
            }
            return;
        };

        if self.adj_rib_out.get(&key) == Some(&path) {
            self.drop_pending(key, timers);
            return;
        }
        let ready_at = self.last_announce.get(&key).map(|t| *t + self.mrai);
        match ready_at {
            Some(at) if at > now => {
                self.pending.insert(key, path);
                self.mrai_timers.entry(key).or_insert_with(|| timers.arm(at, TimerId::Mrai { peer, prefix }));
            }
            _ => {
                self.drop_pending(key, timers);
                self.adj_rib_out.insert(key, path.clone());
                self.last_announce.insert(key, now);
                out.push(BgpUpdate::announce(self.asn, peer, prefix, path));
            }
        }
    }

    fn drop_pending(&mut self, key: (Asn, Prefix), timers: &mut dyn TimerService) {
        self.pending.remove(&key);
        if let Some(h) = self.mrai_timers.remove(&key) {
            timers.cancel(h);
        }
    }
}
