//! Controller-side graphs: the path store, the Switch Graph and its per-prefix
//! loop-sanitized AS Graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bgp::AsPath;
use crate::topology::{Asn, Prefix};

/// Every externally learned path currently valid, keyed by
/// `(border switch, external peer, prefix)`. Paths are stored verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathStore {
    paths: BTreeMap<(Asn, Asn, Prefix), AsPath>,
}

impl PathStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous path, if any.
    pub fn insert(&mut self, switch: Asn, peer: Asn, prefix: Prefix, path: AsPath) -> Option<AsPath> {
        self.paths.insert((switch, peer, prefix), path)
    }

    pub fn remove(&mut self, switch: Asn, peer: Asn, prefix: Prefix) -> Option<AsPath> {
        self.paths.remove(&(switch, peer, prefix))
    }

    pub fn get(&self, switch: Asn, peer: Asn, prefix: Prefix) -> Option<&AsPath> {
        self.paths.get(&(switch, peer, prefix))
    }

    /// Removes everything learned over one session and returns the prefixes
    /// that were affected.
    pub fn remove_session(&mut self, switch: Asn, peer: Asn) -> BTreeSet<Prefix> {
        let keys: Vec<_> = self.paths.keys().filter(|(s, p, _)| *s == switch && *p == peer).copied().collect();
        keys.into_iter()
            .map(|k| {
                self.paths.remove(&k);
                k.2
            })
            .collect()
    }

    pub fn prefixes(&self) -> BTreeSet<Prefix> {
        self.paths.keys().map(|k| k.2).collect()
    }

    pub fn candidates(&self, switch: Asn, prefix: Prefix) -> impl Iterator<Item = (Asn, &AsPath)> + '_ {
        self.paths
            .range((switch, Asn(0), prefix)..)
            .take_while(move |((s, _, _), _)| *s == switch)
            .filter(move |((_, _, p), _)| *p == prefix)
            .map(|((_, peer, _), path)| (*peer, path))
    }

    /// Hop-count minimal candidate; ties go to the lexicographically smaller path.
    pub fn best(&self, switch: Asn, prefix: Prefix) -> Option<AsPath> {
        self.candidates(switch, prefix)
            .map(|(_, path)| path)
            .min_by(|a, b| (a.len(), *a).cmp(&(b.len(), *b)))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Directed view of the cluster: switch adjacencies plus one best-annotated
/// edge per `(switch, prefix)`. An empty annotation means directly connected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwitchGraph {
    pub switches: BTreeSet<Asn>,
    pub switch_edges: BTreeSet<(Asn, Asn)>,
    pub prefix_edges: BTreeMap<(Asn, Prefix), AsPath>,
}

impl SwitchGraph {
    pub fn build(
        switches: &BTreeSet<Asn>,
        switch_edges: &BTreeSet<(Asn, Asn)>,
        store: &PathStore,
        direct: &BTreeMap<Prefix, Asn>,
    ) -> SwitchGraph {
        let mut prefix_edges = BTreeMap::new();
        for (prefix, origin) in direct {
            if switches.contains(origin) {
                prefix_edges.insert((*origin, *prefix), AsPath::empty());
            }
        }
        for prefix in store.prefixes() {
            for &s in switches {
                if prefix_edges.contains_key(&(s, prefix)) {
                    continue;
                }
                if let Some(best) = store.best(s, prefix) {
                    prefix_edges.insert((s, prefix), best);
                }
            }
        }
        SwitchGraph { switches: switches.clone(), switch_edges: switch_edges.clone(), prefix_edges }
    }

    pub fn annotation(&self, switch: Asn, prefix: Prefix) -> Option<&AsPath> {
        self.prefix_edges.get(&(switch, prefix))
    }
}

/// Per-prefix AS-level graph the controller runs shortest paths on.
///
/// Weights make a path's total cost equal to the hop count of its expanded
/// AS path: intra-cluster edges cost 1, a virtual link costs its external
/// segment length plus one, and a prefix attachment costs its annotation
/// length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsGraph {
    pub prefix: Option<Prefix>,
    pub nodes: BTreeSet<Asn>,
    pub intra: BTreeSet<(Asn, Asn)>,
    /// `(from, to) -> external segment` (never empty).
    pub virtual_links: BTreeMap<(Asn, Asn), AsPath>,
    /// `node -> remaining external path` to the prefix.
    pub attachments: BTreeMap<Asn, AsPath>,
}

impl AsGraph {
    pub fn intra_weight() -> u32 {
        1
    }

    pub fn virtual_weight(segment: &AsPath) -> u32 {
        segment.len() as u32 + 1
    }

    pub fn attachment_weight(annotation: &AsPath) -> u32 {
        annotation.len() as u32
    }

    /// Keeps the shorter (then lexicographically smaller) segment per pair.
    pub fn add_virtual_link(&mut self, from: Asn, to: Asn, segment: AsPath) {
        if from == to || segment.is_empty() {
            return;
        }
        match self.virtual_links.get(&(from, to)) {
            Some(old) if (old.len(), old) <= (segment.len(), &segment) => {}
            _ => {
                self.virtual_links.insert((from, to), segment);
            }
        }
    }

    pub fn add_attachment(&mut self, at: Asn, annotation: AsPath) {
        match self.attachments.get(&at) {
            Some(old) if (old.len(), old) <= (annotation.len(), &annotation) => {}
            _ => {
                self.attachments.insert(at, annotation);
            }
        }
    }

    /// Outgoing node-to-node edges of `from` as `(to, weight, segment)`.
    pub fn out_edges(&self, from: Asn) -> Vec<(Asn, u32, Option<&AsPath>)> {
        let mut out: Vec<_> = self
            .intra
            .iter()
            .filter(|(a, _)| *a == from)
            .map(|(_, b)| (*b, Self::intra_weight(), None))
            .collect();
        out.extend(
            self.virtual_links
                .iter()
                .filter(|((a, _), _)| *a == from)
                .map(|((_, b), seg)| (*b, Self::virtual_weight(seg), Some(seg))),
        );
        out
    }
}

/// Result of [`transform`]: the graph and the path-store entries of other
/// switches that were consulted to validate re-entry segments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transformed {
    pub graph: AsGraph,
    pub references: BTreeSet<(Asn, Asn)>,
}

/// Switch Graph to AS Graph for one prefix.
///
/// Each switch's best annotation is split at every cluster ASN it contains.
/// The leading external segment becomes a virtual link from the switch to
/// the first cluster AS; segments between two cluster ASes become virtual
/// links between them; what follows the last cluster AS becomes a prefix
/// attachment there. Segments other than the leading one describe another
/// switch's routing and are only kept when that switch's own path store
/// still confirms them, so stale re-entries cannot keep a withdrawn route
/// alive.
pub fn transform(
    sg: &SwitchGraph,
    store: &PathStore,
    direct: &BTreeMap<Prefix, Asn>,
    prefix: Prefix,
) -> Transformed {
    let mut out = Transformed {
        graph: AsGraph {
            prefix: Some(prefix),
            nodes: sg.switches.clone(),
            intra: sg.switch_edges.clone(),
            ..AsGraph::default()
        },
        references: BTreeSet::new(),
    };
    let is_member = |a: &Asn| sg.switches.contains(a);

    for &switch in &sg.switches {
        let Some(annotation) = sg.annotation(switch, prefix) else { continue };
        let hops = annotation.hops();
        let cut_points: Vec<usize> = hops.iter().enumerate().filter(|(_, a)| is_member(a)).map(|(i, _)| i).collect();
        if cut_points.is_empty() {
            out.graph.add_attachment(switch, annotation.clone());
            continue;
        }

        let mut current = switch;
        let mut start = 0;
        for &idx in &cut_points {
            let entry = hops[idx];
            let segment = AsPath::new(hops[start..idx].to_vec());
            if current == switch {
                out.graph.add_virtual_link(current, entry, segment);
            } else if !segment.is_empty() {
                let peer = segment.hops()[0];
                out.references.insert((current, peer));
                let confirmed = store
                    .get(current, peer, prefix)
                    .is_some_and(|p| p.hops().starts_with(segment.hops()) && p.hops().get(segment.len()) == Some(&entry));
                if confirmed {
                    out.graph.add_virtual_link(current, entry, segment);
                }
            }
            current = entry;
            start = idx + 1;
        }

        let trailing = AsPath::new(hops[start..].to_vec());
        let confirmed = match trailing.first() {
            None => direct.get(&prefix) == Some(&current),
            Some(peer) => {
                out.references.insert((current, peer));
                store.get(current, peer, prefix) == Some(&trailing)
            }
        };
        if confirmed {
            out.graph.add_attachment(current, trailing);
        }
    }
    out
}
