//! JSON wire format shared by the server and UI clients. See
//! `docs/protocol.md` for the schema.

use std::collections::BTreeMap;

use hrsim_core::metrics::{ForwardingSnapshot, UpdateLogEntry, Verdict};
use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::sim::SimTime;
use hrsim_core::topology::{Asn, Prefix, Role};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Envelope of every message in either direction. `seq` strictly increases
/// within a session; client-sent messages may leave it at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMessage")]
pub struct WireMessage {
    #[serde(default = "version")]
    pub v: u32,
    #[serde(default)]
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

fn version() -> u32 {
    PROTOCOL_VERSION
}

// Decoding goes through `type` first: serde's buffering for flattened or
// tagged content turns integer map keys into strings it then rejects.
#[derive(Deserialize)]
struct RawMessage {
    #[serde(default = "version")]
    v: u32,
    #[serde(default)]
    seq: u64,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: serde_json::Value,
}

impl TryFrom<RawMessage> for WireMessage {
    type Error = String;

    fn try_from(raw: RawMessage) -> Result<Self, String> {
        use serde_json::from_value as de;
        let p = raw.payload;
        let body = match raw.kind.as_str() {
            "hello" => de(p).map(Body::Hello),
            "topology" => de(p).map(Body::Topology),
            "forwarding_tree" => de(p).map(Body::ForwardingTree),
            "update_event" => de(p).map(Body::UpdateEvent),
            "metrics_tick" => de(p).map(Body::MetricsTick),
            "command" => de(p).map(Body::Command),
            "command_ack" => de(p).map(Body::CommandAck),
            "error" => de(p).map(Body::Error),
            other => return Err(format!("unknown message type {other:?}")),
        };
        let body = body.map_err(|e| format!("bad {} payload: {e}", raw.kind))?;
        Ok(WireMessage { v: raw.v, seq: raw.seq, body })
    }
}

impl WireMessage {
    pub fn new(seq: u64, body: Body) -> Self {
        WireMessage { v: PROTOCOL_VERSION, seq, body }
    }

    pub fn kind(&self) -> &'static str {
        match &self.body {
            Body::Hello(_) => "hello",
            Body::Topology(_) => "topology",
            Body::ForwardingTree(_) => "forwarding_tree",
            Body::UpdateEvent(_) => "update_event",
            Body::MetricsTick(_) => "metrics_tick",
            Body::Command(_) => "command",
            Body::CommandAck(_) => "command_ack",
            Body::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Hello(Hello),
    Topology(TopologyView),
    ForwardingTree(ForwardingTree),
    UpdateEvent(UpdateLogEntry),
    MetricsTick(MetricsTick),
    Command(Command),
    CommandAck(CommandAck),
    Error(ErrorPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub session: String,
    pub client: u64,
    pub sim_time: SimTime,
    pub speed: f64,
    pub seed: u64,
    pub scenario: ScenarioSpec,
    pub streams: Vec<StreamKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Topology,
    ForwardingTree,
    UpdateEvent,
    MetricsTick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub asn: Asn,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkView {
    pub a: Asn,
    pub b: Asn,
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyView {
    pub sim_time: SimTime,
    pub nodes: Vec<NodeView>,
    pub links: Vec<LinkView>,
    pub prefix: Prefix,
    pub client: Asn,
    pub primary: Asn,
    pub backup: Asn,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub collector: Option<Asn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardingTree {
    pub snapshot: ForwardingSnapshot,
    pub loops: usize,
    pub blackholes: usize,
}

impl From<ForwardingSnapshot> for ForwardingTree {
    fn from(snapshot: ForwardingSnapshot) -> Self {
        ForwardingTree { loops: snapshot.count(Verdict::Loop), blackholes: snapshot.count(Verdict::Blackhole), snapshot }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTick {
    pub sim_time: SimTime,
    pub speed: f64,
    pub events: u64,
    /// Inter-AS updates delivered so far, collector copies excluded.
    pub updates_total: u64,
    pub quiescent: bool,
    /// Sim time of the last link command.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trigger: Option<SimTime>,
    pub updates_since_trigger: u64,
    /// Set once the network is quiescent after the last trigger.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence_time: Option<SimTime>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub churn_rate: Option<f64>,
    pub hop_counts: BTreeMap<Asn, u32>,
}

/// A client request; `id` is echoed in the matching ack or error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub id: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    ToggleLink {
        a: Asn,
        b: Asn,
        up: bool,
    },
    /// `prefix` applies to the forwarding-tree stream and defaults to the
    /// scenario's client prefix.
    Subscribe {
        streams: Vec<StreamKind>,
        #[serde(default)]
        prefix: Option<Prefix>,
    },
    Unsubscribe {
        streams: Vec<StreamKind>,
    },
    SetSpeed {
        speed: f64,
    },
    /// Runs to quiescence without waiting for the wall clock.
    FastForward,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::ToggleLink { .. } => "toggle_link",
            Action::Subscribe { .. } => "subscribe",
            Action::Unsubscribe { .. } => "unsubscribe",
            Action::SetSpeed { .. } => "set_speed",
            Action::FastForward => "fast_forward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub id: String,
    pub action: String,
    pub sim_time: SimTime,
    /// The command changed nothing, e.g. a link set to its current state.
    pub noop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub id: Option<String>,
    pub code: String,
    pub message: String,
}
