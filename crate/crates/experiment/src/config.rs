use std::path::PathBuf;

use hrsim_core::scenario::ScenarioSpec;
use hrsim_core::sim::SimTime;
use hrsim_core::topology::{GraphFamily, GraphParams};
use serde::{Deserialize, Serialize};

use crate::SweepError;

/// Sweep configuration. Every field has a default matching the full
/// experiment grid, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub families: Vec<GraphFamily>,
    pub sizes: Vec<u32>,
    pub penetrations: Vec<u32>,
    /// Seconds.
    pub mrai: Vec<SimTime>,
    pub crwi: SimTime,
    pub install_delay: SimTime,
    pub prepend_count: u32,
    pub runs_per_cell: u32,
    pub base_seed: u64,
    /// Erdos-Renyi edge / Newman-Watts-Strogatz shortcut probability.
    pub p: f64,
    /// Barabasi-Albert attachment count.
    pub m: u32,
    /// Newman-Watts-Strogatz ring degree.
    pub k: u32,
    pub link_delay: SimTime,
    pub processing_delay: SimTime,
    pub detection_delay: SimTime,
    pub trigger_gap: SimTime,
    /// Parallel workers; `None` uses all cores.
    pub workers: Option<usize>,
    pub output: OutputPaths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub records_csv: Option<PathBuf>,
    pub records_json: Option<PathBuf>,
    pub summary_csv: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let spec = ScenarioSpec::default();
        let g = GraphParams::new(GraphFamily::Clique, 8);
        SweepConfig {
            families: GraphFamily::ALL.to_vec(),
            sizes: vec![8, 16, 32],
            penetrations: vec![0, 25, 50, 75],
            mrai: vec![SimTime::ZERO, SimTime::from_secs(30)],
            crwi: spec.crwi,
            install_delay: spec.install_delay,
            prepend_count: spec.prepend_count,
            runs_per_cell: 20,
            base_seed: 1,
            p: g.p,
            m: g.m,
            k: g.k,
            link_delay: spec.link_delay,
            processing_delay: spec.processing_delay,
            detection_delay: spec.detection_delay,
            trigger_gap: spec.trigger_gap,
            workers: None,
            output: OutputPaths::default(),
        }
    }
}

/// One boxplot cell: everything but the run index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub family: GraphFamily,
    pub n: u32,
    pub penetration: u32,
    pub mrai: SimTime,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::Config(m.to_string()));
        if self.runs_per_cell == 0 {
            return bad("runs_per_cell must be at least 1");
        }
        if self.families.is_empty() || self.sizes.is_empty() || self.penetrations.is_empty() || self.mrai.is_empty() {
            return bad("families, sizes, penetrations and mrai must be non-empty");
        }
        if self.penetrations.iter().any(|p| *p > 100) {
            return bad("penetrations are percentages in [0, 100]");
        }
        for &family in &self.families {
            for &n in &self.sizes {
                let spec = self.spec(CellKey { family, n, penetration: 0, mrai: SimTime::ZERO });
                spec.graph_params().validate().map_err(|e| SweepError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &family in &self.families {
            for &n in &self.sizes {
                for &penetration in &self.penetrations {
                    for &mrai in &self.mrai {
                        out.push(CellKey { family, n, penetration, mrai });
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn total_runs(&self) -> usize {
        self.cells().len() * self.runs_per_cell as usize
    }

    pub fn spec(&self, cell: CellKey) -> ScenarioSpec {
        ScenarioSpec {
            family: cell.family,
            n: cell.n,
            p: self.p,
            m: self.m,
            k: self.k,
            penetration: cell.penetration as f64,
            mrai: cell.mrai,
            crwi: self.crwi,
            install_delay: self.install_delay,
            prepend_count: self.prepend_count,
            link_delay: self.link_delay,
            processing_delay: self.processing_delay,
            detection_delay: self.detection_delay,
            trigger_gap: self.trigger_gap,
            ..ScenarioSpec::default()
        }
    }

    /// Seed of run `run` in every cell of this family and size; shared
    /// across penetrations and MRAI values.
    pub fn run_seed(&self, family: GraphFamily, n: u32, run: u32) -> u64 {
        hrsim_core::sim::RngStreams::new(self.base_seed).derive(&format!("{family}/{n}/{run}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_1920_runs() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.cells().len(), 96);
        assert_eq!(cfg.total_runs(), 1920);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_json_is_default() {
        let cfg: SweepConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, SweepConfig::default());
        let cfg: SweepConfig = serde_json::from_str(r#"{"mrai":[30],"sizes":[8],"runs_per_cell":1}"#).unwrap();
        assert_eq!(cfg.mrai, vec![SimTime::from_secs(30)]);
        assert!(serde_json::from_str::<SweepConfig>(r#"{"size":[8]}"#).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = SweepConfig { runs_per_cell: 0, ..SweepConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SweepConfig { m: 8, sizes: vec![8], ..SweepConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_ignore_penetration_and_mrai() {
        let cfg = SweepConfig::default();
        let a = cfg.run_seed(GraphFamily::Clique, 8, 3);
        assert_eq!(a, cfg.run_seed(GraphFamily::Clique, 8, 3));
        assert_ne!(a, cfg.run_seed(GraphFamily::Clique, 8, 4));
        assert_ne!(a, cfg.run_seed(GraphFamily::Clique, 16, 3));
    }
}
