use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use hrsim_core::failover::run_failover;
use hrsim_core::metrics::RunMeta;
use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::sim::SimTime;
use hrsim_core::topology::{Asn, FailoverScenario, GraphFamily};
use proptest::prelude::*;

/// Hop counts to the client after the primary link fails, with the backup
/// link weighted by the prepend count.
fn oracle(sc: &FailoverScenario) -> BTreeMap<Asn, u32> {
    let mut adj: BTreeMap<Asn, Vec<(Asn, u32)>> = BTreeMap::new();
    for (a, b, _) in sc.topology.links() {
        let ends = [a, b];
        if ends.contains(&sc.client) && ends.contains(&sc.primary) {
            continue;
        }
        let w = if ends.contains(&sc.client) && ends.contains(&sc.backup) { sc.prepend_count } else { 1 };
        adj.entry(a).or_default().push((b, w));
        adj.entry(b).or_default().push((a, w));
    }
    let mut dist = BTreeMap::new();
    let mut heap = BinaryHeap::from([Reverse((0, sc.client))]);
    while let Some(Reverse((d, v))) = heap.pop() {
        if dist.contains_key(&v) {
            continue;
        }
        dist.insert(v, d);
        for &(u, w) in adj.get(&v).into_iter().flatten() {
            heap.push(Reverse((d + w, u)));
        }
    }
    sc.topology.isp_nodes().into_iter().filter_map(|a| dist.get(&a).map(|d| (a, *d))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn failover_ends_on_shortest_loop_free_paths(
        family in prop::sample::select(GraphFamily::ALL.to_vec()),
        n in prop::sample::select(vec![8u32, 16]),
        pen in prop::sample::select(vec![0.0, 25.0, 50.0, 75.0, 100.0]),
        mrai in prop::sample::select(vec![0u64, 5, 30]),
        seed in any::<u64>(),
    ) {
        let spec = ScenarioSpec { family, n, penetration: pen, mrai: SimTime::from_secs(mrai), ..ScenarioSpec::default() };
        let sc = spec.build(seed).unwrap();
        let run = run_failover(&sc, spec.network_config()).unwrap();
        let meta = RunMeta { family, n, penetration: pen as u32, mrai: spec.mrai, crwi: spec.crwi, run: 0, seed };
        let r = run.record(&sc, meta);
        prop_assert!(r.violations().is_empty(), "{:?}", r.violations());
        prop_assert_eq!(r.reachable_fraction, 1.0);
        prop_assert_eq!(&r.hop_counts, &oracle(&sc));
        prop_assert!(r.convergence_time > SimTime::ZERO);
    }
}

#[test]
fn full_penetration_routes_are_shortest_paths() {
    for family in GraphFamily::ALL {
        let spec = ScenarioSpec { family, n: 16, penetration: 100.0, ..ScenarioSpec::default() };
        let sc = spec.build(5).unwrap();
        let run = run_failover(&sc, spec.network_config()).unwrap();
        let want = oracle(&sc);
        for (asn, d) in want {
            let route = run.world.controller().route(asn, sc.prefix).expect("every member has a route");
            assert_eq!(route.cost, d, "{family} {asn}");
        }
    }
}
