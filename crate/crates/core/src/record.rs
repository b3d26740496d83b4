//! Per-episode run records and their CSV/JSON encodings.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::evaluation::{DiagnosticsRow, WeightedGapReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub k: usize,
    pub steps_total: u64,
    pub tau_k: usize,
    pub update_norm: Vec<f64>,
    pub max_width: Vec<f64>,
    pub min_width: Vec<f64>,
    /// Whether each player's true kernel lies inside its intervals after
    /// this episode's update.
    pub coverage: Vec<bool>,
    /// Steps each player needed to cover all of its pairs.
    pub local_lengths: Vec<usize>,
    pub policy_fingerprints: Vec<u64>,
    pub ni_gap_weighted: Option<f64>,
    pub ni_gap_instant: Option<f64>,
    pub diagnostics: Option<Vec<DiagnosticsRow>>,
    /// `‖ν̂^k − ν^k‖₁` per player.
    pub nu_error: Option<Vec<f64>>,
    /// The matching bound `2|S|/(1 − e^{−1/τ}) · width`.
    pub nu_bound: Option<Vec<f64>>,
}

/// `q̂^k` of every player, flattened in `(s, a, s')` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub k: usize,
    pub q_hat: Vec<Vec<f64>>,
    pub shapes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub episode: usize,
    pub player: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub num_players: usize,
    pub master_seed: u64,
    /// Mixing-time bound used by the oracle diagnostics.
    pub tau: f64,
    pub deltas: Vec<f64>,
    pub rows: Vec<EpisodeRow>,
    pub snapshots: Vec<Snapshot>,
    pub failures: Vec<Failure>,
    pub final_weighted: Option<WeightedGapReport>,
}

impl RunRecord {
    pub fn new(num_players: usize, master_seed: u64, tau: f64, deltas: Vec<f64>) -> Self {
        Self {
            num_players,
            master_seed,
            tau,
            deltas,
            rows: Vec::new(),
            snapshots: Vec::new(),
            failures: Vec::new(),
            final_weighted: None,
        }
    }

    /// Appends a row; `k` must exceed the last row's.
    pub fn push(&mut self, row: EpisodeRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.k > last.k, "rows must be strictly increasing in k");
        }
        self.rows.push(row);
    }

    /// True kernel inside every player's intervals at every episode.
    pub fn covered(&self) -> bool {
        self.rows.iter().all(|r| r.coverage.iter().all(|&c| c))
    }

    pub fn mean_episode_len(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.tau_k as f64).sum::<f64>() / self.rows.len() as f64
    }

    /// The last recorded weighted gap.
    pub fn final_gap(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.ni_gap_weighted)
    }

    pub fn csv_header(num_players: usize) -> String {
        let mut cols = vec!["k".to_string(), "steps_total".into(), "tau_k".into()];
        for i in 0..num_players {
            cols.push(format!("update_norm_{i}"));
            cols.push(format!("max_width_{i}"));
            cols.push(format!("coverage_{i}"));
        }
        cols.push("ni_gap_weighted".into());
        cols.push("ni_gap_instant".into());
        for i in 0..num_players {
            cols.push(format!("error_{i}"));
            cols.push(format!("regret_{i}"));
            cols.push(format!("bias_{i}"));
        }
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.num_players);
        out.push('\n');
        // Debug formatting is the shortest round-trip form and switches to
        // exponent notation for tiny values.
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for row in &self.rows {
            let _ = write!(out, "{},{},{}", row.k, row.steps_total, row.tau_k);
            for i in 0..self.num_players {
                let _ = write!(
                    out,
                    ",{:?},{:?},{}",
                    row.update_norm[i],
                    row.max_width[i],
                    u8::from(row.coverage[i])
                );
            }
            let _ = write!(out, ",{},{}", opt(row.ni_gap_weighted), opt(row.ni_gap_instant));
            for i in 0..self.num_players {
                match &row.diagnostics {
                    Some(d) => {
                        let _ = write!(out, ",{:?},{:?},{:?}", d[i].error_term, d[i].regret_term, d[i].bias_term);
                    }
                    None => out.push_str(",,,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run records serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
