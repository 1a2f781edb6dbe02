use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::topology::GraphFamily;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct NamedScenario {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: ScenarioSpec,
}

fn spec(family: GraphFamily, n: u32, penetration: f64) -> ScenarioSpec {
    ScenarioSpec { family, n, penetration, ..ScenarioSpec::default() }
}

/// Scenarios a client can start by name.
pub fn bundled() -> Vec<NamedScenario> {
    use GraphFamily::*;
    vec![
        NamedScenario { name: "clique-8", description: "8-node clique, plain BGP", spec: spec(Clique, 8, 0.0) },
        NamedScenario {
            name: "clique-8-sdn75",
            description: "8-node clique, 75% of ASes in the SDN cluster",
            spec: spec(Clique, 8, 75.0),
        },
        NamedScenario { name: "er-16-sdn50", description: "16-node Erdős–Rényi graph, 50% clustered", spec: spec(ErdosRenyi, 16, 50.0) },
        NamedScenario {
            name: "ba-16-sdn25",
            description: "16-node Barabási–Albert graph, 25% clustered",
            spec: spec(BarabasiAlbert, 16, 25.0),
        },
        NamedScenario {
            name: "nws-32-sdn75",
            description: "32-node Newman–Watts–Strogatz graph, 75% clustered",
            spec: spec(NewmanWattsStrogatz, 32, 75.0),
        },
    ]
}

pub fn find(name: &str) -> Option<NamedScenario> {
    bundled().into_iter().find(|s| s.name == name)
}
