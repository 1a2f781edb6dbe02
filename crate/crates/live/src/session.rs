//! One live simulation, paced against a wall clock. Everything here is
//! synchronous and takes the wall time as an argument; the thread that owns
//! a session lives in [`crate::runner`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use hrsim_core::failover::{converge_initial, PHASE_LIMIT};
use hrsim_core::metrics::{forwarding_snapshot, measure_churn, measure_convergence};
use hrsim_core::network::{NetworkError, World};
use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::sim::SimTime;
use hrsim_core::topology::{Asn, FailoverScenario, Prefix, TopologyError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::*;

pub type ClientId = u64;

/// Wall-clock source, injectable for tests.
pub trait Clock: Send + Sync {
    /// Time elapsed since some fixed origin.
    fn now(&self) -> Duration;
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

/// A clock that only moves when told to.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<Mutex<Duration>>);

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("speed must be a positive number, got {0}")]
    Speed(f64),
    #[error(transparent)]
    Scenario(#[from] TopologyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub id: String,
    pub spec: ScenarioSpec,
    pub seed: u64,
    /// Sim seconds per wall second.
    pub speed: f64,
    /// Minimum wall time between two forwarding trees for one prefix.
    pub throttle: Duration,
    pub metrics_interval: Duration,
}

impl SessionConfig {
    pub fn new(id: impl Into<String>, spec: ScenarioSpec, seed: u64, speed: f64) -> Self {
        SessionConfig {
            id: id.into(),
            spec,
            seed,
            speed,
            throttle: Duration::from_millis(100),
            metrics_interval: Duration::from_millis(250),
        }
    }
}

/// A link command as it took effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub id: String,
    pub at: SimTime,
    pub a: Asn,
    pub b: Asn,
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: String,
    pub scenario: ScenarioSpec,
    pub seed: u64,
    pub speed: f64,
    pub sim_time: SimTime,
    pub quiescent: bool,
    pub clients: usize,
    pub commands: Vec<CommandRecord>,
    pub metrics: MetricsTick,
}

/// A message and the clients it is meant for.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: Vec<ClientId>,
    pub msg: WireMessage,
}

#[derive(Debug, Clone)]
struct Client {
    streams: BTreeSet<StreamKind>,
    prefix: Option<Prefix>,
}

#[derive(Debug, Clone, Default)]
struct TreeState {
    last_sent: Option<Duration>,
    dirty: bool,
}

pub struct LiveSession {
    cfg: SessionConfig,
    scenario: FailoverScenario,
    world: World,
    seq: u64,
    /// Wall and sim time at the last speed change.
    anchor: (Duration, SimTime),
    clients: BTreeMap<ClientId, Client>,
    next_client: ClientId,
    log_cursor: usize,
    change_cursor: usize,
    trees: BTreeMap<Prefix, TreeState>,
    last_metrics: Option<Duration>,
    commands: Vec<CommandRecord>,
}

const DEFAULT_STREAMS: [StreamKind; 2] = [StreamKind::Topology, StreamKind::MetricsTick];

fn valid_speed(speed: f64) -> Result<f64, SessionError> {
    if speed.is_finite() && speed > 0.0 {
        Ok(speed)
    } else {
        Err(SessionError::Speed(speed))
    }
}

impl LiveSession {
    /// Builds the scenario and converges it before pacing starts at `wall`.
    pub fn new(cfg: SessionConfig, wall: Duration) -> Result<LiveSession, SessionError> {
        valid_speed(cfg.speed)?;
        let scenario = cfg.spec.build(cfg.seed)?;
        let (world, t0) = converge_initial(&scenario, cfg.spec.network_config())?;
        Ok(LiveSession {
            log_cursor: world.update_log().len(),
            change_cursor: world.state_changes().len(),
            cfg,
            scenario,
            world,
            seq: 0,
            anchor: (wall, t0),
            clients: BTreeMap::new(),
            next_client: 1,
            trees: BTreeMap::new(),
            last_metrics: None,
            commands: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.cfg.id
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn scenario(&self) -> &FailoverScenario {
        &self.scenario
    }

    pub fn commands(&self) -> &[CommandRecord] {
        &self.commands
    }

    pub fn speed(&self) -> f64 {
        self.cfg.speed
    }

    /// Sim time the pacing wants at `wall`.
    pub fn target(&self, wall: Duration) -> SimTime {
        let elapsed = wall.saturating_sub(self.anchor.0);
        let sim_us = (elapsed.as_micros() as f64 * self.cfg.speed).round() as u64;
        self.anchor.1 + SimTime::from_micros(sim_us)
    }

    fn message(&mut self, to: Vec<ClientId>, body: Body) -> Outgoing {
        self.seq += 1;
        Outgoing { to, msg: WireMessage::new(self.seq, body) }
    }

    fn subscribers(&self, kind: StreamKind) -> Vec<ClientId> {
        self.clients.iter().filter(|(_, c)| c.streams.contains(&kind)).map(|(id, _)| *id).collect()
    }

    fn tree_subscribers(&self, prefix: Prefix) -> Vec<ClientId> {
        self.clients
            .iter()
            .filter(|(_, c)| c.streams.contains(&StreamKind::ForwardingTree) && c.prefix == Some(prefix))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn topology_view(&self) -> TopologyView {
        TopologyView {
            sim_time: self.world.now(),
            nodes: self.world.topology().nodes().map(|(asn, role)| NodeView { asn, role }).collect(),
            links: self.world.links().map(|(a, b, up)| LinkView { a, b, up }).collect(),
            prefix: self.scenario.prefix,
            client: self.scenario.client,
            primary: self.scenario.primary,
            backup: self.scenario.backup,
            collector: self.world.collector(),
        }
    }

    pub fn forwarding_tree(&self, prefix: Prefix) -> ForwardingTree {
        forwarding_snapshot(self.world.forwarding_table(prefix), prefix, self.world.now()).into()
    }

    pub fn metrics(&self) -> MetricsTick {
        let w = &self.world;
        let trigger = self.commands.last().map(|c| c.at);
        let log = w.update_log();
        let inter_as = |from: SimTime| log.iter().filter(|e| !e.collector && e.time >= from).count() as u64;
        let quiescent = w.is_quiescent();
        let convergence = trigger.and_then(|t| measure_convergence(log, w.state_changes(), t, quiescent).ok());
        let churn = match (trigger, convergence) {
            (Some(t), Some(d)) => {
                let c = measure_churn(log, t, d);
                (!c.zero_duration).then_some(c.rate)
            }
            _ => None,
        };
        MetricsTick {
            sim_time: w.now(),
            speed: self.cfg.speed,
            events: w.events_processed(),
            updates_total: inter_as(SimTime::ZERO),
            quiescent,
            trigger,
            updates_since_trigger: trigger.map_or(0, inter_as),
            convergence_time: convergence,
            churn_rate: churn,
            hop_counts: self
                .scenario
                .topology
                .isp_nodes()
                .into_iter()
                .filter_map(|a| w.hop_count(a, self.scenario.prefix).map(|h| (a, h)))
                .collect(),
        }
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            id: self.cfg.id.clone(),
            scenario: self.cfg.spec.clone(),
            seed: self.cfg.seed,
            speed: self.cfg.speed,
            sim_time: self.world.now(),
            quiescent: self.world.is_quiescent(),
            clients: self.clients.len(),
            commands: self.commands.clone(),
            metrics: self.metrics(),
        }
    }

    /// Registers a client and returns what it needs to start rendering.
    pub fn attach(&mut self, wall: Duration) -> (ClientId, Vec<Outgoing>) {
        let mut out = self.advance(wall);
        let id = self.next_client;
        self.next_client += 1;
        self.clients.insert(id, Client { streams: DEFAULT_STREAMS.into(), prefix: None });
        let hello = Hello {
            protocol: PROTOCOL_VERSION,
            session: self.cfg.id.clone(),
            client: id,
            sim_time: self.world.now(),
            speed: self.cfg.speed,
            seed: self.cfg.seed,
            scenario: self.cfg.spec.clone(),
            streams: DEFAULT_STREAMS.to_vec(),
        };
        let body = Body::Hello(hello);
        out.push(self.message(vec![id], body));
        let body = Body::Topology(self.topology_view());
        out.push(self.message(vec![id], body));
        let body = Body::MetricsTick(self.metrics());
        out.push(self.message(vec![id], body));
        (id, out)
    }

    pub fn detach(&mut self, client: ClientId) {
        self.clients.remove(&client);
    }

    /// Runs the simulation up to the paced target and emits what changed.
    pub fn advance(&mut self, wall: Duration) -> Vec<Outgoing> {
        let target = self.target(wall);
        if target > self.world.now() {
            self.world.run_until(target);
        }
        self.collect(wall)
    }

    fn collect(&mut self, wall: Duration) -> Vec<Outgoing> {
        let mut out = Vec::new();

        let log_len = self.world.update_log().len();
        let to = self.subscribers(StreamKind::UpdateEvent);
        if !to.is_empty() {
            for i in self.log_cursor..log_len {
                let entry = self.world.update_log()[i].clone();
                out.push(self.message(to.clone(), Body::UpdateEvent(entry)));
            }
        }
        self.log_cursor = log_len;

        let changes = self.world.state_changes();
        let touched: BTreeSet<Prefix> = changes[self.change_cursor..].iter().map(|c| c.prefix).collect();
        self.change_cursor = changes.len();
        for prefix in touched {
            if let Some(t) = self.trees.get_mut(&prefix) {
                t.dirty = true;
            }
        }
        let due: Vec<Prefix> = self
            .trees
            .iter()
            .filter(|(_, t)| t.dirty && t.last_sent.is_none_or(|s| wall.saturating_sub(s) >= self.cfg.throttle))
            .map(|(p, _)| *p)
            .collect();
        for prefix in due {
            let to = self.tree_subscribers(prefix);
            let tree = self.trees.get_mut(&prefix).expect("listed above");
            tree.dirty = false;
            if to.is_empty() {
                continue;
            }
            tree.last_sent = Some(wall);
            let body = Body::ForwardingTree(self.forwarding_tree(prefix));
            out.push(self.message(to, body));
        }

        if self.last_metrics.is_none_or(|t| wall.saturating_sub(t) >= self.cfg.metrics_interval) {
            self.last_metrics = Some(wall);
            let to = self.subscribers(StreamKind::MetricsTick);
            if !to.is_empty() {
                let body = Body::MetricsTick(self.metrics());
                out.push(self.message(to, body));
            }
        }
        out
    }

    /// Raw text from a client: parsed, executed, answered.
    pub fn inbound(&mut self, client: ClientId, text: &str, wall: Duration) -> Vec<Outgoing> {
        match serde_json::from_str::<WireMessage>(text) {
            Ok(WireMessage { body: Body::Command(cmd), .. }) => self.command(client, cmd, wall),
            Ok(other) => {
                let kind = other.kind();
                vec![self.error(client, None, "unexpected_message", format!("clients may only send commands, got {kind}"))]
            }
            Err(e) => {
                // salvage the id so the client can match the error
                let id = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| v.pointer("/payload/id").and_then(|id| id.as_str()).map(str::to_owned));
                vec![self.error(client, id, "bad_request", e.to_string())]
            }
        }
    }

    fn error(&mut self, client: ClientId, id: Option<String>, code: &str, message: String) -> Outgoing {
        self.message(vec![client], Body::Error(ErrorPayload { id, code: code.into(), message }))
    }

    fn ack(&mut self, client: ClientId, id: String, action: &Action, noop: bool) -> Outgoing {
        let ack = CommandAck { id, action: action.name().into(), sim_time: self.world.now(), noop };
        self.message(vec![client], Body::CommandAck(ack))
    }

    /// Executes a command at the sim time that corresponds to `wall`.
    /// Exactly one ack or error for `cmd.id` is among the returned messages.
    pub fn command(&mut self, client: ClientId, cmd: Command, wall: Duration) -> Vec<Outgoing> {
        let mut out = self.advance(wall);
        let Command { id, action } = cmd;
        match &action {
            Action::ToggleLink { a, b, up } => match self.world.link_is_up(*a, *b) {
                None => out.push(self.error(client, Some(id), "unknown_link", format!("no link between {a} and {b}"))),
                Some(state) if state == *up => out.push(self.ack(client, id, &action, true)),
                Some(_) => {
                    let now = self.world.now();
                    apply_link(&mut self.world, *a, *b, *up).expect("link exists");
                    self.commands.push(CommandRecord { id: id.clone(), at: now, a: *a, b: *b, up: *up });
                    out.push(self.ack(client, id, &action, false));
                    let to = self.subscribers(StreamKind::Topology);
                    if !to.is_empty() {
                        let body = Body::Topology(self.topology_view());
                        out.push(self.message(to, body));
                    }
                    out.extend(self.collect(wall));
                }
            },
            Action::Subscribe { streams, prefix } => {
                let prefix = prefix.unwrap_or(self.scenario.prefix);
                let wants_tree = streams.contains(&StreamKind::ForwardingTree);
                if wants_tree && self.world.topology().origin_of(prefix).is_none() {
                    out.push(self.error(client, Some(id), "unknown_prefix", format!("{prefix} is not originated in this scenario")));
                    return out;
                }
                let Some(c) = self.clients.get_mut(&client) else {
                    out.push(self.error(client, Some(id), "unknown_client", "client is not attached".into()));
                    return out;
                };
                let before = c.streams.len();
                let prefix_changed = wants_tree && c.prefix != Some(prefix);
                c.streams.extend(streams.iter().copied());
                if wants_tree {
                    c.prefix = Some(prefix);
                }
                let noop = c.streams.len() == before && !prefix_changed;
                out.push(self.ack(client, id, &action, noop));
                if wants_tree && !noop {
                    self.trees.entry(prefix).or_default();
                    let body = Body::ForwardingTree(self.forwarding_tree(prefix));
                    out.push(self.message(vec![client], body));
                }
                if streams.contains(&StreamKind::Topology) && !noop {
                    let body = Body::Topology(self.topology_view());
                    out.push(self.message(vec![client], body));
                }
            }
            Action::Unsubscribe { streams } => {
                let Some(c) = self.clients.get_mut(&client) else {
                    out.push(self.error(client, Some(id), "unknown_client", "client is not attached".into()));
                    return out;
                };
                let before = c.streams.len();
                c.streams.retain(|s| !streams.contains(s));
                let noop = c.streams.len() == before;
                out.push(self.ack(client, id, &action, noop));
            }
            Action::SetSpeed { speed } => match valid_speed(*speed) {
                Err(e) => out.push(self.error(client, Some(id), "bad_speed", e.to_string())),
                Ok(speed) => {
                    let noop = speed == self.cfg.speed;
                    self.anchor = (wall, self.world.now());
                    self.cfg.speed = speed;
                    out.push(self.ack(client, id, &action, noop));
                }
            },
            Action::FastForward => {
                let limit = self.world.now() + PHASE_LIMIT;
                match self.world.run_until_quiescent(limit) {
                    Ok(t) => {
                        self.anchor = (wall, t);
                        out.push(self.ack(client, id, &action, false));
                        // the final tree must not wait for the throttle
                        for t in self.trees.values_mut() {
                            t.last_sent = None;
                        }
                        out.extend(self.collect(wall));
                    }
                    Err(e) => out.push(self.error(client, Some(id), "not_quiescent", e.to_string())),
                }
            }
        }
        out
    }
}

/// Applies a link command at the world's current time and processes it
/// before anything else that is due later.
pub fn apply_link(world: &mut World, a: Asn, b: Asn, up: bool) -> Result<(), NetworkError> {
    let now = world.now();
    world.schedule_link(now, a, b, up)?;
    world.run_until(now);
    Ok(())
}

/// Batch re-execution of a live session: the same scenario and seed, with
/// each recorded command applied at the sim time it took effect, then run to
/// quiescence.
pub fn replay(spec: &ScenarioSpec, seed: u64, commands: &[CommandRecord]) -> Result<World, SessionError> {
    let scenario = spec.build(seed)?;
    let (mut world, _) = converge_initial(&scenario, spec.network_config())?;
    for c in commands {
        world.run_until(c.at);
        apply_link(&mut world, c.a, c.b, c.up)?;
    }
    let limit = world.now() + PHASE_LIMIT;
    world.run_until_quiescent(limit)?;
    Ok(world)
}
