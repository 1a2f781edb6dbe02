//! Shortest paths over an [`AsGraph`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::AsGraph;
use crate::bgp::AsPath;
use crate::topology::Asn;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "hop", rename_all = "lowercase")]
pub enum Hop {
    Intra { to: Asn },
    Virtual { to: Asn, segment: AsPath },
    Attach { annotation: AsPath },
}

/// A cluster AS's route to the prefix: a sequence of AS Graph edges ending
/// in an attachment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChosenPath {
    pub cost: u32,
    pub hops: Vec<Hop>,
}

impl ChosenPath {
    /// Full AS sequence starting with `from`.
    pub fn expand(&self, from: Asn) -> AsPath {
        let mut v = vec![from];
        for hop in &self.hops {
            match hop {
                Hop::Intra { to } => v.push(*to),
                Hop::Virtual { to, segment } => {
                    v.extend_from_slice(segment.hops());
                    v.push(*to);
                }
                Hop::Attach { annotation } => v.extend_from_slice(annotation.hops()),
            }
        }
        AsPath::new(v)
    }

    /// The neighbour packets are handed to; `None` when the prefix is
    /// directly connected here.
    pub fn next_hop(&self) -> Option<Asn> {
        match self.hops.first()? {
            Hop::Intra { to } => Some(*to),
            Hop::Virtual { to, segment } => Some(segment.first().unwrap_or(*to)),
            Hop::Attach { annotation } => annotation.first(),
        }
    }

    /// Cluster ASes traversed after the first one.
    pub fn cluster_hops(&self) -> impl Iterator<Item = Asn> + '_ {
        self.hops.iter().filter_map(|h| match h {
            Hop::Intra { to } | Hop::Virtual { to, .. } => Some(*to),
            Hop::Attach { .. } => None,
        })
    }
}

type Label = (u32, Vec<Asn>, Vec<Hop>);

fn better(a: &Label, b: &Label) -> bool {
    (a.0, &a.1) < (b.0, &b.1)
}

/// Dijkstra towards the prefix sink. For every node that can reach the
/// prefix, returns its minimum-cost path; equal costs are broken by the
/// lexicographically smallest expanded AS sequence.
pub fn shortest_paths(graph: &AsGraph) -> BTreeMap<Asn, ChosenPath> {
    let mut labels: BTreeMap<Asn, Label> = BTreeMap::new();
    for (&at, annotation) in &graph.attachments {
        if graph.nodes.contains(&at) {
            labels.insert(
                at,
                (
                    AsGraph::attachment_weight(annotation),
                    annotation.hops().to_vec(),
                    vec![Hop::Attach { annotation: annotation.clone() }],
                ),
            );
        }
    }

    let mut incoming: BTreeMap<Asn, Vec<(Asn, u32, Option<&AsPath>)>> = BTreeMap::new();
    for &n in &graph.nodes {
        for (to, w, seg) in graph.out_edges(n) {
            if graph.nodes.contains(&to) {
                incoming.entry(to).or_default().push((n, w, seg));
            }
        }
    }

    let mut settled: BTreeMap<Asn, Label> = BTreeMap::new();
    let mut open: BTreeSet<Asn> = labels.keys().copied().collect();
    while let Some(&next) = open
        .iter()
        .min_by(|a, b| {
            let (la, lb) = (&labels[a], &labels[b]);
            (la.0, &la.1, **a).cmp(&(lb.0, &lb.1, **b))
        })
    {
        open.remove(&next);
        let label = labels.remove(&next).expect("open nodes carry labels");
        for (from, w, seg) in incoming.get(&next).into_iter().flatten() {
            if settled.contains_key(from) || *from == next {
                continue;
            }
            let mut seq = Vec::with_capacity(label.1.len() + 4);
            let hop = match seg {
                Some(segment) => {
                    seq.extend_from_slice(segment.hops());
                    Hop::Virtual { to: next, segment: (*segment).clone() }
                }
                None => Hop::Intra { to: next },
            };
            seq.push(next);
            seq.extend_from_slice(&label.1);
            let mut hops = Vec::with_capacity(label.2.len() + 1);
            hops.push(hop);
            hops.extend(label.2.iter().cloned());
            let cand = (label.0 + w, seq, hops);
            match labels.get(from) {
                Some(cur) if !better(&cand, cur) => {}
                _ => {
                    labels.insert(*from, cand);
                    open.insert(*from);
                }
            }
        }
        settled.insert(next, label);
    }

    settled.into_iter().map(|(asn, (cost, _, hops))| (asn, ChosenPath { cost, hops })).collect()
}

/// Shortest paths whose expansions never revisit an AS.
///
/// Paths learned at different switches can disagree while BGP is still
/// converging, so a virtual link and the tail it leads to may share an
/// external AS. Whenever a chosen expansion loops, the virtual link involved
/// is dropped and the computation repeats. Returns the paths and the
/// virtual links that were dropped.
pub fn compute_paths(graph: &AsGraph) -> (BTreeMap<Asn, ChosenPath>, Vec<(Asn, Asn)>) {
    let mut graph = graph.clone();
    let mut dropped = Vec::new();
    loop {
        let paths = shortest_paths(&graph);
        let offending = paths.iter().find_map(|(&from, path)| {
            let expanded = path.expand(from);
            if !expanded.has_loop() {
                return None;
            }
            Some(looping_virtual_link(from, path).expect("a loop always involves a virtual segment"))
        });
        match offending {
            None => return (paths, dropped),
            Some(link) => {
                graph.virtual_links.remove(&link);
                dropped.push(link);
            }
        }
    }
}

fn looping_virtual_link(from: Asn, path: &ChosenPath) -> Option<(Asn, Asn)> {
    let expanded = path.expand(from);
    let mut counts: BTreeMap<Asn, usize> = BTreeMap::new();
    let mut prev = None;
    for &a in expanded.hops() {
        if prev != Some(a) {
            *counts.entry(a).or_default() += 1;
        }
        prev = Some(a);
    }
    let mut at = from;
    for hop in &path.hops {
        match hop {
            Hop::Intra { to } => at = *to,
            Hop::Virtual { to, segment } => {
                if segment.hops().iter().any(|a| counts.get(a).copied().unwrap_or(0) > 1) {
                    return Some((at, *to));
                }
                at = *to;
            }
            Hop::Attach { .. } => {}
        }
    }
    None
}
