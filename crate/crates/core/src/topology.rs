//! AS-level topologies: synthetic graph families, SDN cluster membership and
//! the dual-homed fail-over scenario.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::sim::{RngStreams, SimTime};

/// Per-link propagation delay used by the generators.
pub const DEFAULT_LINK_DELAY: SimTime = SimTime::from_millis(2);

/// Resampling budget for graph families that can come out disconnected.
pub const MAX_CONNECT_ATTEMPTS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

/// An IPv4 prefix in canonical form (host bits cleared).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    addr: Ipv4Addr,
    len: u8,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("missing '/' in prefix {0:?}")]
    MissingLength(String),
    #[error("invalid address in prefix {0:?}")]
    BadAddress(String),
    #[error("invalid mask length in prefix {0:?}")]
    BadLength(String),
    #[error("prefix {0:?} has host bits set")]
    HostBits(String),
}

impl Prefix {
    pub fn new(addr: Ipv4Addr, len: u8) -> Result<Self, PrefixError> {
        if len > 32 {
            return Err(PrefixError::BadLength(format!("{addr}/{len}")));
        }
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        if u32::from(addr) & !mask != 0 {
            return Err(PrefixError::HostBits(format!("{addr}/{len}")));
        }
        Ok(Prefix { addr, len })
    }

    pub fn addr(&self) -> Ipv4Addr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    /// A /24 derived from an AS number, used for scenario-originated prefixes.
    pub fn for_asn(asn: Asn) -> Prefix {
        let n = asn.0;
        let addr = Ipv4Addr::new(10, ((n >> 8) & 0xff) as u8, (n & 0xff) as u8, 0);
        Prefix::new(addr, 24).expect("host bits are zero")
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Prefix {
    type Err = PrefixError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s.split_once('/').ok_or_else(|| PrefixError::MissingLength(s.to_string()))?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| PrefixError::BadAddress(s.to_string()))?;
        let len: u8 = len.parse().map_err(|_| PrefixError::BadLength(s.to_string()))?;
        Prefix::new(addr, len)
    }
}

impl Serialize for Prefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Legacy,
    Cluster,
    Client,
    Collector,
}

impl Role {
    /// Transit providers, i.e. the nodes produced by the graph generators.
    pub fn is_isp(self) -> bool {
        matches!(self, Role::Legacy | Role::Cluster)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid graph parameters: {0}")]
    Config(String),
    #[error("graph still disconnected after {0} attempts")]
    Disconnected(u32),
    #[error("self-link on {0}")]
    SelfLink(Asn),
    #[error("duplicate link {0}-{1}")]
    DuplicateLink(Asn, Asn),
    #[error("link references unknown node {0}")]
    UnknownNode(Asn),
    #[error("duplicate node {0}")]
    DuplicateNode(Asn),
    #[error("prefix {0} originated more than once")]
    DuplicateOrigination(Prefix),
    #[error("need at least two ISP nodes, found {0}")]
    TooFewIsps(usize),
}

/// Undirected AS-level graph with node roles and prefix originations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    nodes: BTreeMap<Asn, Role>,
    links: BTreeMap<(Asn, Asn), SimTime>,
    originations: BTreeMap<Prefix, Asn>,
}

fn ordered(a: Asn, b: Asn) -> (Asn, Asn) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, asn: Asn, role: Role) -> Result<(), TopologyError> {
        if self.nodes.contains_key(&asn) {
            return Err(TopologyError::DuplicateNode(asn));
        }
        self.nodes.insert(asn, role);
        Ok(())
    }

    pub fn add_link(&mut self, a: Asn, b: Asn, delay: SimTime) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLink(a));
        }
        for x in [a, b] {
            if !self.nodes.contains_key(&x) {
                return Err(TopologyError::UnknownNode(x));
            }
        }
        let key = ordered(a, b);
        if self.links.contains_key(&key) {
            return Err(TopologyError::DuplicateLink(key.0, key.1));
        }
        self.links.insert(key, delay);
        Ok(())
    }

    pub fn originate(&mut self, prefix: Prefix, origin: Asn) -> Result<(), TopologyError> {
        if !self.nodes.contains_key(&origin) {
            return Err(TopologyError::UnknownNode(origin));
        }
        if self.originations.contains_key(&prefix) {
            return Err(TopologyError::DuplicateOrigination(prefix));
        }
        self.originations.insert(prefix, origin);
        Ok(())
    }

    pub fn role(&self, asn: Asn) -> Option<Role> {
        self.nodes.get(&asn).copied()
    }

    pub fn set_role(&mut self, asn: Asn, role: Role) {
        if let Some(r) = self.nodes.get_mut(&asn) {
            *r = role;
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Asn, Role)> + '_ {
        self.nodes.iter().map(|(a, r)| (*a, *r))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<Asn> {
        self.nodes.iter().filter(|(_, r)| **r == role).map(|(a, _)| *a).collect()
    }

    pub fn isp_nodes(&self) -> Vec<Asn> {
        self.nodes.iter().filter(|(_, r)| r.is_isp()).map(|(a, _)| *a).collect()
    }

    pub fn cluster_members(&self) -> BTreeSet<Asn> {
        self.nodes_with_role(Role::Cluster).into_iter().collect()
    }

    /// Links as `(low, high, delay)`.
    pub fn links(&self) -> impl Iterator<Item = (Asn, Asn, SimTime)> + '_ {
        self.links.iter().map(|((a, b), d)| (*a, *b, *d))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn has_link(&self, a: Asn, b: Asn) -> bool {
        self.links.contains_key(&ordered(a, b))
    }

    pub fn link_delay(&self, a: Asn, b: Asn) -> Option<SimTime> {
        self.links.get(&ordered(a, b)).copied()
    }

    pub fn set_uniform_delay(&mut self, delay: SimTime) {
        for d in self.links.values_mut() {
            *d = delay;
        }
    }

    pub fn neighbors(&self, asn: Asn) -> Vec<Asn> {
        self.links
            .keys()
            .filter_map(|&(a, b)| {
                if a == asn {
                    Some(b)
                } else if b == asn {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn originations(&self) -> impl Iterator<Item = (Prefix, Asn)> + '_ {
        self.originations.iter().map(|(p, a)| (*p, *a))
    }

    pub fn origin_of(&self, prefix: Prefix) -> Option<Asn> {
        self.originations.get(&prefix).copied()
    }

    /// Connectivity over the nodes that take part in data links (the
    /// collector is excluded).
    pub fn is_connected(&self) -> bool {
        let members: BTreeSet<Asn> =
            self.nodes.iter().filter(|(_, r)| **r != Role::Collector).map(|(a, _)| *a).collect();
        let Some(&start) = members.iter().next() else {
            return true;
        };
        let mut adj: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
        for &(a, b) in self.links.keys() {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in adj.get(&u).into_iter().flatten() {
                if seen.insert(*v) {
                    queue.push_back(*v);
                }
            }
        }
        members.iter().all(|a| seen.contains(a))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TopologyFile::from(self)).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Topology, TopologyImportError> {
        let file: TopologyFile = serde_json::from_str(s)?;
        Ok(Topology::try_from(file)?)
    }
}

#[derive(Debug, Error)]
pub enum TopologyImportError {
    #[error("malformed topology JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] TopologyError),
}

/// On-disk topology schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub nodes: Vec<NodeEntry>,
    pub links: Vec<LinkEntry>,
    #[serde(default)]
    pub originations: Vec<OriginationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeEntry {
    pub asn: Asn,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkEntry {
    pub a: Asn,
    pub b: Asn,
    /// Seconds.
    #[serde(default = "default_delay")]
    pub delay: SimTime,
}

fn default_delay() -> SimTime {
    DEFAULT_LINK_DELAY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OriginationEntry {
    pub prefix: Prefix,
    pub origin: Asn,
}

impl From<&Topology> for TopologyFile {
    fn from(t: &Topology) -> Self {
        TopologyFile {
            nodes: t.nodes().map(|(asn, role)| NodeEntry { asn, role }).collect(),
            links: t.links().map(|(a, b, delay)| LinkEntry { a, b, delay }).collect(),
            originations: t.originations().map(|(prefix, origin)| OriginationEntry { prefix, origin }).collect(),
        }
    }
}

impl TryFrom<TopologyFile> for Topology {
    type Error = TopologyError;
    fn try_from(file: TopologyFile) -> Result<Self, Self::Error> {
        let mut t = Topology::new();
        for n in file.nodes {
            t.add_node(n.asn, n.role)?;
        }
        for l in file.links {
            t.add_link(l.a, l.b, l.delay)?;
        }
        for o in file.originations {
            t.originate(o.prefix, o.origin)?;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    Clique,
    ErdosRenyi,
    BarabasiAlbert,
    NewmanWattsStrogatz,
}

impl GraphFamily {
    pub const ALL: [GraphFamily; 4] = [
        GraphFamily::Clique,
        GraphFamily::ErdosRenyi,
        GraphFamily::BarabasiAlbert,
        GraphFamily::NewmanWattsStrogatz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphFamily::Clique => "clique",
            GraphFamily::ErdosRenyi => "erdos-renyi",
            GraphFamily::BarabasiAlbert => "barabasi-albert",
            GraphFamily::NewmanWattsStrogatz => "newman-watts-strogatz",
        }
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphFamily {
    type Err = TopologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GraphFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| TopologyError::Config(format!("unknown graph family {s:?}")))
    }
}

/// Generator parameters. `p` is the edge probability (Erdos-Renyi) or the
/// shortcut probability (Newman-Watts-Strogatz), `m` the attachment count
/// (Barabasi-Albert) and `k` the ring degree (Newman-Watts-Strogatz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub family: GraphFamily,
    pub n: u32,
    #[serde(default = "GraphParams::default_p")]
    pub p: f64,
    #[serde(default = "GraphParams::default_m")]
    pub m: u32,
    #[serde(default = "GraphParams::default_k")]
    pub k: u32,
}

impl GraphParams {
    fn default_p() -> f64 {
        0.3
    }
    fn default_m() -> u32 {
        2
    }
    fn default_k() -> u32 {
        4
    }

    pub fn new(family: GraphFamily, n: u32) -> Self {
        GraphParams { family, n, p: Self::default_p(), m: Self::default_m(), k: Self::default_k() }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let err = |m: String| Err(TopologyError::Config(m));
        if self.n < 2 {
            return err(format!("n must be at least 2, got {}", self.n));
        }
        match self.family {
            GraphFamily::Clique => Ok(()),
            GraphFamily::ErdosRenyi if !(0.0..=1.0).contains(&self.p) => {
                err(format!("edge probability {} outside [0, 1]", self.p))
            }
            GraphFamily::ErdosRenyi => Ok(()),
            GraphFamily::BarabasiAlbert if self.m == 0 || self.m >= self.n => {
                err(format!("barabasi-albert needs 1 <= m < n, got m={} n={}", self.m, self.n))
            }
            GraphFamily::BarabasiAlbert => Ok(()),
            GraphFamily::NewmanWattsStrogatz if !(0.0..=1.0).contains(&self.p) => {
                err(format!("shortcut probability {} outside [0, 1]", self.p))
            }
            GraphFamily::NewmanWattsStrogatz if self.k < 2 || self.k >= self.n => {
                err(format!("newman-watts-strogatz needs 2 <= k < n, got k={} n={}", self.k, self.n))
            }
            GraphFamily::NewmanWattsStrogatz => Ok(()),
        }
    }
}

/// Generates a connected ISP graph with nodes `AS1..=ASn`, all legacy.
///
/// Families that may produce disconnected graphs are resampled with derived
/// sub-seeds, up to [`MAX_CONNECT_ATTEMPTS`] times.
pub fn generate(params: &GraphParams, seed: u64) -> Result<Topology, TopologyError> {
    params.validate()?;
    let streams = RngStreams::new(seed);
    for attempt in 0..MAX_CONNECT_ATTEMPTS {
        let mut rng = if attempt == 0 {
            streams.fork("graph")
        } else {
            streams.fork(&format!("graph/retry-{attempt}"))
        };
        let edges = match params.family {
            GraphFamily::Clique => clique_edges(params.n),
            GraphFamily::ErdosRenyi => erdos_renyi_edges(params.n, params.p, &mut rng),
            GraphFamily::BarabasiAlbert => barabasi_albert_edges(params.n, params.m, &mut rng),
            GraphFamily::NewmanWattsStrogatz => newman_watts_strogatz_edges(params.n, params.k, params.p, &mut rng),
        };
        let mut topo = Topology::new();
        for i in 0..params.n {
            topo.add_node(Asn(i + 1), Role::Legacy)?;
        }
        for (a, b) in edges {
            topo.add_link(Asn(a + 1), Asn(b + 1), DEFAULT_LINK_DELAY)?;
        }
        if topo.is_connected() {
            return Ok(topo);
        }
        log::debug!("{} n={} attempt {attempt} disconnected, resampling", params.family, params.n);
    }
    Err(TopologyError::Disconnected(MAX_CONNECT_ATTEMPTS))
}

fn clique_edges(n: u32) -> BTreeSet<(u32, u32)> {
    (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
}

fn erdos_renyi_edges(n: u32, p: f64, rng: &mut ChaCha8Rng) -> BTreeSet<(u32, u32)> {
    let mut edges = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen::<f64>() < p {
                edges.insert((a, b));
            }
        }
    }
    edges
}

fn edge(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Preferential attachment starting from `m` isolated seed nodes; every new
/// node attaches to `m` distinct targets drawn proportionally to degree.
/// Produces exactly `(n - m) * m` edges.
fn barabasi_albert_edges(n: u32, m: u32, rng: &mut ChaCha8Rng) -> BTreeSet<(u32, u32)> {
    let mut edges = BTreeSet::new();
    let mut targets: Vec<u32> = (0..m).collect();
    let mut repeated: Vec<u32> = Vec::new();
    for source in m..n {
        for &t in &targets {
            edges.insert(edge(source, t));
        }
        repeated.extend(targets.iter().copied());
        repeated.extend(std::iter::repeat_n(source, m as usize));
        let mut chosen = BTreeSet::new();
        while (chosen.len() as u32) < m {
            let idx = rng.gen_range(0..repeated.len() as u32) as usize;
            chosen.insert(repeated[idx]);
        }
        targets = chosen.into_iter().collect();
    }
    edges
}

/// Ring lattice where each node links to its `k/2` nearest neighbours on each
/// side, plus random shortcuts added (never rewired) with probability `p` per
/// ring edge.
fn newman_watts_strogatz_edges(n: u32, k: u32, p: f64, rng: &mut ChaCha8Rng) -> BTreeSet<(u32, u32)> {
    let mut edges = BTreeSet::new();
    for j in 1..=k / 2 {
        for u in 0..n {
            edges.insert(edge(u, (u + j) % n));
        }
    }
    let degree = |edges: &BTreeSet<(u32, u32)>, u: u32| edges.iter().filter(|(a, b)| *a == u || *b == u).count();
    for _ in 0..k / 2 {
        for u in 0..n {
            if rng.gen::<f64>() < p {
                if degree(&edges, u) as u32 >= n - 1 {
                    continue;
                }
                loop {
                    let w = rng.gen_range(0..n);
                    if w != u && !edges.contains(&edge(u, w)) {
                        edges.insert(edge(u, w));
                        break;
                    }
                }
            }
        }
    }
    edges
}

/// Number of ISP nodes that become cluster members at `penetration` percent.
pub fn cluster_size(isp_count: usize, penetration: f64) -> usize {
    ((penetration / 100.0) * isp_count as f64).round() as usize
}

/// Marks `round(penetration% x ISPs)` uniformly chosen ISP nodes as cluster
/// members; all other ISPs become legacy. Clients and collectors are never
/// touched. For a fixed seed the chosen sets are nested across penetrations.
pub fn assign_cluster(topo: &Topology, penetration: f64, seed: u64) -> Topology {
    let penetration = penetration.clamp(0.0, 100.0);
    let mut isps = topo.isp_nodes();
    let k = cluster_size(isps.len(), penetration);
    let mut rng = RngStreams::new(seed).fork("cluster");
    shuffle(&mut isps, &mut rng);
    let chosen: BTreeSet<Asn> = isps.into_iter().take(k).collect();
    let mut out = topo.clone();
    for asn in topo.isp_nodes() {
        out.set_role(asn, if chosen.contains(&asn) { Role::Cluster } else { Role::Legacy });
    }
    out
}

/// Fisher-Yates with 32-bit index draws so results do not depend on the
/// platform's pointer width.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i as u32) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    /// Occurrences of the client ASN on announcements over the backup link.
    pub prepend_count: u32,
    pub client_link_delay: SimTime,
    /// Time between initial convergence and the primary link failure.
    pub trigger_gap: SimTime,
    pub collector: bool,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            prepend_count: 10,
            client_link_delay: DEFAULT_LINK_DELAY,
            trigger_gap: SimTime::from_secs(60),
            collector: true,
        }
    }
}

/// Dual-homed client that loses its primary provider link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailoverScenario {
    #[serde(with = "topology_serde")]
    pub topology: Topology,
    pub client: Asn,
    pub prefix: Prefix,
    pub primary: Asn,
    pub backup: Asn,
    pub prepend_count: u32,
    pub trigger_gap: SimTime,
}

impl FailoverScenario {
    /// Export prepend per (speaker, peer); only the client's backup session
    /// deviates from a single prepend.
    pub fn prepend_for(&self, speaker: Asn, peer: Asn) -> u32 {
        if speaker == self.client && peer == self.backup {
            self.prepend_count
        } else {
            1
        }
    }

    pub fn collector(&self) -> Option<Asn> {
        self.topology.nodes_with_role(Role::Collector).first().copied()
    }
}

pub(crate) mod topology_serde {
    use super::*;

    pub fn serialize<S: Serializer>(t: &Topology, s: S) -> Result<S::Ok, S::Error> {
        TopologyFile::from(t).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Topology, D::Error> {
        let file = TopologyFile::deserialize(d)?;
        Topology::try_from(file).map_err(serde::de::Error::custom)
    }
}

/// Adds a client AS (and, if enabled, a route collector) to `topo`, wires it
/// to two distinct uniformly drawn providers and originates its prefix.
///
/// The client gets ASN `max + 1`, the collector `max + 2`.
pub fn build_failover_scenario(
    topo: &Topology,
    seed: u64,
    opts: &ScenarioOptions,
) -> Result<FailoverScenario, TopologyError> {
    let isps = topo.isp_nodes();
    if isps.len() < 2 {
        return Err(TopologyError::TooFewIsps(isps.len()));
    }
    if opts.prepend_count == 0 {
        return Err(TopologyError::Config("prepend_count must be at least 1".into()));
    }
    let mut rng = RngStreams::new(seed).fork("placement");
    let first = rng.gen_range(0..isps.len() as u32) as usize;
    let mut second = rng.gen_range(0..isps.len() as u32 - 1) as usize;
    if second >= first {
        second += 1;
    }
    let (primary, backup) = (isps[first], isps[second]);

    let max = topo.nodes().map(|(a, _)| a.0).max().unwrap_or(0);
    let client = Asn(max + 1);
    let prefix = Prefix::for_asn(client);
    let mut out = topo.clone();
    out.add_node(client, Role::Client)?;
    out.add_link(client, primary, opts.client_link_delay)?;
    out.add_link(client, backup, opts.client_link_delay)?;
    out.originate(prefix, client)?;
    if opts.collector {
        out.add_node(Asn(max + 2), Role::Collector)?;
    }
    Ok(FailoverScenario {
        topology: out,
        client,
        prefix,
        primary,
        backup,
        prepend_count: opts.prepend_count,
        trigger_gap: opts.trigger_gap,
    })
}
