//! Declarative description of one fail-over experiment cell and the seeding
//! scheme that turns it into a concrete scenario.
//!
//! A run seed fixes the topology, the client's providers and the order in
//! which ISPs join the cluster. Penetration and MRAI are not part of the
//! seed, so runs sharing a seed are paired: same graph and providers, nested
//! cluster sets.

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::network::NetworkConfig;
use crate::sim::{RngStreams, SimTime};
use crate::topology::{
    assign_cluster, build_failover_scenario, generate, FailoverScenario, GraphFamily, GraphParams, ScenarioOptions,
    TopologyError, DEFAULT_LINK_DELAY,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: GraphFamily,
    pub n: u32,
    pub p: f64,
    pub m: u32,
    pub k: u32,
    /// Percentage of ISPs in the cluster.
    pub penetration: f64,
    pub mrai: SimTime,
    pub crwi: SimTime,
    pub install_delay: SimTime,
    pub prepend_count: u32,
    pub link_delay: SimTime,
    pub processing_delay: SimTime,
    pub detection_delay: SimTime,
    pub trigger_gap: SimTime,
    pub collector: bool,
    pub outbound_loop_check: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let g = GraphParams::new(GraphFamily::Clique, 8);
        let net = NetworkConfig::default();
        let opts = ScenarioOptions::default();
        ScenarioSpec {
            family: g.family,
            n: g.n,
            p: g.p,
            m: g.m,
            k: g.k,
            penetration: 0.0,
            mrai: net.mrai,
            crwi: net.controller.crwi,
            install_delay: net.controller.install_delay,
            prepend_count: opts.prepend_count,
            link_delay: DEFAULT_LINK_DELAY,
            processing_delay: net.processing_delay,
            detection_delay: net.detection_delay,
            trigger_gap: opts.trigger_gap,
            collector: opts.collector,
            outbound_loop_check: net.outbound_loop_check,
        }
    }
}

impl ScenarioSpec {
    pub fn graph_params(&self) -> GraphParams {
        GraphParams { family: self.family, n: self.n, p: self.p, m: self.m, k: self.k }
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            mrai: self.mrai,
            controller: ControllerConfig { crwi: self.crwi, install_delay: self.install_delay },
            processing_delay: self.processing_delay,
            detection_delay: self.detection_delay,
            outbound_loop_check: self.outbound_loop_check,
            ..NetworkConfig::default()
        }
    }

    pub fn options(&self) -> ScenarioOptions {
        ScenarioOptions {
            prepend_count: self.prepend_count,
            client_link_delay: self.link_delay,
            trigger_gap: self.trigger_gap,
            collector: self.collector,
        }
    }

    pub fn build(&self, seed: u64) -> Result<FailoverScenario, TopologyError> {
        if !(0.0..=100.0).contains(&self.penetration) {
            return Err(TopologyError::Config(format!("penetration {} outside [0, 100]", self.penetration)));
        }
        let streams = RngStreams::new(seed);
        let mut topo = generate(&self.graph_params(), streams.derive("topology"))?;
        topo.set_uniform_delay(self.link_delay);
        let topo = assign_cluster(&topo, self.penetration, streams.derive("cluster"));
        build_failover_scenario(&topo, streams.derive("placement"), &self.options())
    }
}
