//! Cross-seed summary statistics.

use occunash::simulator::Mode;
use occunash::RunRecord;
use serde::{Deserialize, Serialize};

use crate::experiment::ExperimentSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    #[serde(rename = "K")]
    pub k: usize,
    pub seeds: usize,
    /// Episodes at which the weighted gap was evaluated.
    pub gap_k: Vec<usize>,
    pub gap_median: Vec<f64>,
    pub gap_q25: Vec<f64>,
    pub gap_q75: Vec<f64>,
    /// Fraction of seeds whose true kernels stayed inside every interval.
    pub coverage_fraction: f64,
    pub mean_episode_len: f64,
    pub episode_len_median: f64,
    /// Seeds that logged at least one confidence collapse.
    pub seeds_with_failures: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn from_records(spec: &ExperimentSpec, records: &[RunRecord]) -> Self {
        let gap_k: Vec<usize> = records
            .first()
            .map(|r| r.rows.iter().filter(|row| row.ni_gap_weighted.is_some()).map(|row| row.k).collect())
            .unwrap_or_default();
        let (mut gap_median, mut gap_q25, mut gap_q75) = (Vec::new(), Vec::new(), Vec::new());
        for &k in &gap_k {
            let mut gaps: Vec<f64> = records.iter().filter_map(|r| r.rows.get(k - 1)?.ni_gap_weighted).collect();
            gaps.sort_by(f64::total_cmp);
            gap_median.push(quantile(&gaps, 0.5));
            gap_q25.push(quantile(&gaps, 0.25));
            gap_q75.push(quantile(&gaps, 0.75));
        }
        let n = records.len().max(1) as f64;
        let mut lens: Vec<f64> = records.iter().map(RunRecord::mean_episode_len).collect();
        lens.sort_by(f64::total_cmp);
        Self {
            mode: spec.mode,
            k: spec.episodes,
            seeds: records.len(),
            gap_k,
            gap_median,
            gap_q25,
            gap_q75,
            coverage_fraction: records.iter().filter(|r| r.covered()).count() as f64 / n,
            mean_episode_len: lens.iter().sum::<f64>() / n,
            episode_len_median: quantile(&lens, 0.5),
            seeds_with_failures: records.iter().filter(|r| !r.failures.is_empty()).count(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summaries serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
