//! The fail-over experiment: converge, cut the client's primary link, and
//! measure how the network settles onto the backup.

use std::collections::BTreeMap;

use crate::metrics::{forwarding_snapshot, measure_churn, measure_convergence, ForwardingSnapshot, RunMeta, RunRecord};
use crate::network::{NetworkConfig, NetworkError, World};
use crate::sim::SimTime;
use crate::topology::{Asn, FailoverScenario};

/// Upper bound on simulated time for each convergence phase.
pub const PHASE_LIMIT: SimTime = SimTime::from_secs(100_000);

pub struct FailoverRun {
    pub world: World,
    pub initial_convergence: SimTime,
    pub trigger_time: SimTime,
    pub quiescent_at: SimTime,
}

/// Per-session prepending of a scenario: the client's backup session.
pub fn scenario_prepends(sc: &FailoverScenario) -> BTreeMap<(Asn, Asn), u32> {
    [((sc.client, sc.backup), sc.prepend_count)].into()
}

/// Builds the world for `sc` and converges it initially.
pub fn converge_initial(sc: &FailoverScenario, cfg: NetworkConfig) -> Result<(World, SimTime), NetworkError> {
    let mut world = World::new(&sc.topology, &scenario_prepends(sc), cfg)?;
    world.start();
    let t0 = world.run_until_quiescent(PHASE_LIMIT)?;
    Ok((world, t0))
}

pub fn run_failover(sc: &FailoverScenario, cfg: NetworkConfig) -> Result<FailoverRun, NetworkError> {
    let (mut world, initial_convergence) = converge_initial(sc, cfg)?;
    let trigger_time = initial_convergence + sc.trigger_gap;
    world.schedule_link(trigger_time, sc.client, sc.primary, false)?;
    let quiescent_at = world.run_until_quiescent(trigger_time + PHASE_LIMIT)?;
    Ok(FailoverRun { world, initial_convergence, trigger_time, quiescent_at })
}

impl FailoverRun {
    pub fn convergence_time(&self) -> SimTime {
        measure_convergence(self.world.update_log(), self.world.state_changes(), self.trigger_time, true)
            .expect("runs end quiescent")
    }

    pub fn snapshot(&self, sc: &FailoverScenario) -> ForwardingSnapshot {
        forwarding_snapshot(self.world.forwarding_table(sc.prefix), sc.prefix, self.world.now())
    }

    pub fn record(&self, sc: &FailoverScenario, meta: RunMeta) -> RunRecord {
        let convergence_time = self.convergence_time();
        let churn = measure_churn(self.world.update_log(), self.trigger_time, convergence_time);
        let snap = self.snapshot(sc);
        let hop_counts = sc
            .topology
            .isp_nodes()
            .into_iter()
            .filter_map(|a| self.world.hop_count(a, sc.prefix).map(|h| (a, h)))
            .collect();
        RunRecord {
            meta,
            cluster_size: self.world.controller().members().len() as u32,
            client: sc.client,
            primary: sc.primary,
            backup: sc.backup,
            trigger_time: self.trigger_time,
            convergence_time,
            update_count: churn.updates,
            churn_rate: churn.rate,
            zero_duration: churn.zero_duration,
            post_convergence_loops: snap.loops() as u32,
            blackholes: snap.blackholes() as u32,
            reachable_fraction: snap.reachable_fraction(),
            recomputations: self.world.controller().history().len() as u32,
            events: self.world.events_processed(),
            mrai_withdrawals: self.world.mrai_withdrawals(),
            looped_controller_adverts: self.world.looped_controller_adverts(),
            hop_counts,
        }
    }
}
