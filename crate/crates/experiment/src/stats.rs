use std::collections::{BTreeMap, BTreeSet};

use hrsim_core::metrics::RunRecord;
use serde::{Deserialize, Serialize};

use crate::config::CellKey;
use crate::SweepError;

/// Five-number summary; quartiles by linear interpolation between order
/// statistics (the default of most statistics packages).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Option<FiveNumber> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(FiveNumber {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn entries(&self) -> [(&'static str, f64); 5] {
        [("min", self.min), ("q1", self.q1), ("median", self.median), ("q3", self.q3), ("max", self.max)]
    }
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub const METRICS: [&str; 3] = ["convergence_time", "churn_rate", "update_count"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: CellKey,
    pub runs: u32,
    pub convergence_time: FiveNumber,
    pub churn_rate: FiveNumber,
    pub update_count: FiveNumber,
}

impl CellSummary {
    pub fn metric(&self, name: &str) -> Option<&FiveNumber> {
        match name {
            "convergence_time" => Some(&self.convergence_time),
            "churn_rate" => Some(&self.churn_rate),
            "update_count" => Some(&self.update_count),
            _ => None,
        }
    }
}

pub fn cell_of(r: &RunRecord) -> CellKey {
    CellKey { family: r.meta.family, n: r.meta.n, penetration: r.meta.penetration, mrai: r.meta.mrai }
}

/// Groups records by cell. Every cell must hold runs `0..runs_per_cell`
/// exactly once; when `runs_per_cell` is `None` it is inferred as the
/// largest run count seen in any cell.
pub fn summarize(records: &[RunRecord], runs_per_cell: Option<u32>) -> Result<Vec<CellSummary>, SweepError> {
    if records.is_empty() {
        return Err(SweepError::Incomplete("no records".into()));
    }
    let mut cells: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry(cell_of(r)).or_default().push(r);
    }
    let expected = runs_per_cell
        .unwrap_or_else(|| records.iter().map(|r| r.meta.run + 1).max().unwrap_or(0));
    let mut problems = Vec::new();
    for (cell, rs) in &cells {
        let have: BTreeSet<u32> = rs.iter().map(|r| r.meta.run).collect();
        let missing: Vec<u32> = (0..expected).filter(|i| !have.contains(i)).collect();
        if !missing.is_empty() || have.len() != rs.len() || rs.len() as u32 != expected {
            problems.push(format!(
                "{} n={} penetration={} mrai={}: {} records, missing runs {:?}",
                cell.family,
                cell.n,
                cell.penetration,
                cell.mrai,
                rs.len(),
                missing
            ));
        }
    }
    if !problems.is_empty() {
        return Err(SweepError::Incomplete(problems.join("; ")));
    }
    Ok(cells
        .into_iter()
        .map(|(cell, rs)| {
            let col = |f: fn(&RunRecord) -> f64| {
                FiveNumber::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("cells are non-empty")
            };
            CellSummary {
                cell,
                runs: rs.len() as u32,
                convergence_time: col(|r| r.convergence_time.as_secs_f64()),
                churn_rate: col(|r| r.churn_rate),
                update_count: col(|r| r.update_count as f64),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_values() {
        let s = FiveNumber::of(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.iqr(), 2.0);
    }

    #[test]
    fn interpolates_between_order_statistics() {
        // numpy.percentile([1, 2, 3, 4], [25, 50, 75]) == [1.75, 2.5, 3.25]
        let s = FiveNumber::of(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        let one = FiveNumber::of(&[7.0]).unwrap();
        assert_eq!((one.min, one.q1, one.median, one.q3, one.max), (7.0, 7.0, 7.0, 7.0, 7.0));
        assert!(FiveNumber::of(&[]).is_none());
    }
}
