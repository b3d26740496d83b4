//! Visit counters and interval confidence sets around the empirical kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex::{ConvexError, LinearConstraintSystem};
use crate::game::TransitionKernel;
use crate::occupancy::ShrunkPolytopeSpec;

/// Intervals narrower than this are emitted as equalities.
const PINNED_WIDTH: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    /// Some interval became empty or a row can no longer sum to one. The
    /// offending rows have already been reset to their fresh intervals.
    #[error("confidence set collapsed at episode {episode} for pairs {pairs:?}")]
    Collapse { episode: usize, pairs: Vec<(usize, usize)> },
    #[error("confidence polytope is empty: {0}")]
    Empty(ConvexError),
    #[error("invalid width schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Known horizon of `horizon` episodes.
    Finite { horizon: usize },
    /// Open-ended; the width grows with `ln k²`.
    Asymptotic,
}

/// Denominator of the width: `2 max(1, N)` (Hoeffding) or `max(1, N)`,
/// which is wider by `√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthConstant {
    #[default]
    Hoeffding,
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthSchedule {
    pub mode: ScheduleMode,
    pub num_players: usize,
    pub gamma: f64,
    pub num_states: usize,
    pub num_actions: usize,
    pub constant: WidthConstant,
}

impl WidthSchedule {
    pub fn new(
        mode: ScheduleMode,
        num_players: usize,
        gamma: f64,
        num_states: usize,
        num_actions: usize,
    ) -> Result<Self, ConfidenceError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ConfidenceError::Schedule(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if let ScheduleMode::Finite { horizon: 0 } = mode {
            return Err(ConfidenceError::Schedule("finite horizon must be at least 1".into()));
        }
        if num_players == 0 || num_states == 0 || num_actions == 0 {
            return Err(ConfidenceError::Schedule("empty game dimensions".into()));
        }
        Ok(Self { mode, num_players, gamma, num_states, num_actions, constant: WidthConstant::Hoeffding })
    }

    pub fn with_constant(mut self, constant: WidthConstant) -> Self {
        self.constant = constant;
        self
    }

    /// Width `ε^k` for a pair visited `count` times, at episode `k ≥ 1`.
    pub fn epsilon(&self, k: usize, count: u64) -> f64 {
        let shape = self.num_players as f64 * self.num_actions as f64 * (self.num_states * self.num_states) as f64;
        let numerator = match self.mode {
            ScheduleMode::Finite { horizon } => (horizon as f64 * shape).ln(),
            ScheduleMode::Asymptotic => {
                let k = k.max(1) as f64;
                (2.0 * k * k * shape).ln()
            }
        } - self.gamma.ln();
        let visits = count.max(1) as f64;
        let denominator = match self.constant {
            WidthConstant::Hoeffding => 2.0 * visits,
            WidthConstant::Wide => visits,
        };
        (numerator / denominator).sqrt()
    }
}

/// Counters `N(s,a)`, `M(s,a,s')` and the running intersection of interval
/// confidence sets, all in `(s, a, s')` row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceState {
    num_states: usize,
    num_actions: usize,
    counts: Vec<u64>,
    transitions: Vec<u64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    episode: usize,
}

impl ConfidenceState {
    /// No data: every interval is `[0, 1]` and the episode index is 1.
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let dim = num_states * num_actions * num_states;
        Self {
            num_states,
            num_actions,
            counts: vec![0; num_states * num_actions],
            transitions: vec![0; dim],
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
            episode: 1,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    fn index(&self, state: usize, action: usize, next: usize) -> usize {
        (state * self.num_actions + action) * self.num_states + next
    }

    pub fn count(&self, state: usize, action: usize) -> u64 {
        self.counts[state * self.num_actions + action]
    }

    pub fn transitions(&self, state: usize, action: usize, next: usize) -> u64 {
        self.transitions[self.index(state, action, next)]
    }

    pub fn lower(&self, state: usize, action: usize, next: usize) -> f64 {
        self.lower[self.index(state, action, next)]
    }

    pub fn upper(&self, state: usize, action: usize, next: usize) -> f64 {
        self.upper[self.index(state, action, next)]
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    pub fn record_transition(&mut self, state: usize, action: usize, next: usize) {
        let idx = self.index(state, action, next);
        self.transitions[idx] += 1;
        self.counts[state * self.num_actions + action] += 1;
    }

    /// `P̄(s'|s,a) = M(s,a,s') / max(1, N(s,a))`.
    pub fn empirical(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions(state, action, next) as f64 / self.count(state, action).max(1) as f64
    }

    /// Intersects the current intervals with `[P̄ − ε, P̄ + ε] ∩ [0, 1]` and
    /// advances the episode index.
    ///
    /// If some row ends up empty, that row is replaced by its fresh interval
    /// (which always contains `P̄`) and [`ConfidenceError::Collapse`] is
    /// returned so the caller can flag the run; the state stays usable.
    pub fn end_episode_update(&mut self, schedule: &WidthSchedule) -> Result<(), ConfidenceError> {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut collapsed = Vec::new();
        for s in 0..ns {
            for a in 0..na {
                let eps = schedule.epsilon(self.episode, self.count(s, a));
                let mut fresh = Vec::with_capacity(ns);
                let (mut sum_lo, mut sum_hi, mut empty) = (0.0, 0.0, false);
                for next in 0..ns {
                    let idx = self.index(s, a, next);
                    let p = self.empirical(s, a, next);
                    let (flo, fhi) = ((p - eps).max(0.0), (p + eps).min(1.0));
                    fresh.push((flo, fhi));
                    let lo = self.lower[idx].max(flo);
                    let hi = self.upper[idx].min(fhi);
                    empty |= lo > hi;
                    self.lower[idx] = lo;
                    self.upper[idx] = hi;
                    sum_lo += lo;
                    sum_hi += hi;
                }
                if empty || sum_lo > 1.0 + PINNED_WIDTH || sum_hi < 1.0 - PINNED_WIDTH {
                    for (next, (flo, fhi)) in fresh.into_iter().enumerate() {
                        let idx = self.index(s, a, next);
                        self.lower[idx] = flo;
                        self.upper[idx] = fhi;
                    }
                    collapsed.push((s, a));
                }
            }
        }
        let episode = self.episode;
        self.episode += 1;
        if collapsed.is_empty() {
            Ok(())
        } else {
            Err(ConfidenceError::Collapse { episode, pairs: collapsed })
        }
    }

    pub fn max_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max)
    }

    pub fn min_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(f64::INFINITY, f64::min)
    }

    /// Sum of interval widths; never increases across episodes.
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).sum()
    }

    /// Whether every entry of `kernel` lies inside its interval.
    pub fn contains(&self, kernel: &TransitionKernel) -> bool {
        kernel
            .as_slice()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&p, (&lo, &hi))| p >= lo - PINNED_WIDTH && p <= hi + PINNED_WIDTH)
    }

    /// Linear system in `q` describing `Δ_δ(𝒫)`: normalization, flow balance,
    /// `ρ ≥ δ` and `lower·ρ ≤ q ≤ upper·ρ`, where `ρ(s,a) = Σ_{s'} q(s,a,s')`.
    /// Lower bounds are always emitted, which also encodes `q ≥ 0`.
    pub fn as_constraints(&self, spec: &ShrunkPolytopeSpec) -> Result<LinearConstraintSystem, ConfidenceError> {
        let system = self.constraints_unchecked(spec);
        system.ensure_feasible().map_err(ConfidenceError::Empty)?;
        Ok(system)
    }

    /// [`as_constraints`](Self::as_constraints) without the phase-one check.
    pub fn constraints_unchecked(&self, spec: &ShrunkPolytopeSpec) -> LinearConstraintSystem {
        let (ns, na) = (self.num_states, self.num_actions);
        let dim = ns * na * ns;
        let mut system = LinearConstraintSystem::new(dim);
        system.add_equality(vec![1.0; dim], 1.0);
        for state in 0..ns {
            let mut row = vec![0.0; dim];
            for s in 0..ns {
                for a in 0..na {
                    for next in 0..ns {
                        let idx = self.index(s, a, next);
                        if s == state {
                            row[idx] += 1.0;
                        }
                        if next == state {
                            row[idx] -= 1.0;
                        }
                    }
                }
            }
            system.add_equality(row, 0.0);
        }
        for s in 0..ns {
            for a in 0..na {
                let start = self.index(s, a, 0);
                if spec.delta > 0.0 {
                    let mut row = vec![0.0; dim];
                    row[start..start + ns].fill(-1.0);
                    system.add_inequality(row, -spec.delta);
                }
                for next in 0..ns {
                    let idx = start + next;
                    let (lo, hi) = (self.lower[idx].clamp(0.0, 1.0), self.upper[idx].clamp(0.0, 1.0));
                    // lo·ρ − q ≤ 0
                    let mut row = vec![0.0; dim];
                    row[start..start + ns].fill(lo);
                    row[idx] -= 1.0;
                    if hi - lo <= PINNED_WIDTH {
                        system.add_equality(row, 0.0);
                        continue;
                    }
                    system.add_inequality(row, 0.0);
                    if hi < 1.0 {
                        // q − hi·ρ ≤ 0
                        let mut row = vec![0.0; dim];
                        row[start..start + ns].fill(-hi);
                        row[idx] += 1.0;
                        system.add_inequality(row, 0.0);
                    }
                }
            }
        }
        system
    }

    /// Test and oracle helper: intervals pinned exactly at `kernel`.
    pub fn pinned(kernel: &TransitionKernel) -> Self {
        let mut state = Self::new(kernel.num_states(), kernel.num_actions());
        state.lower = kernel.as_slice().to_vec();
        state.upper = kernel.as_slice().to_vec();
        state
    }

    /// Test and oracle helper: intervals `[p − width, p + width] ∩ [0, 1]`
    /// around `kernel`.
    pub fn boxed(kernel: &TransitionKernel, width: f64) -> Self {
        let mut state = Self::new(kernel.num_states(), kernel.num_actions());
        state.lower = kernel.as_slice().iter().map(|p| (p - width).max(0.0)).collect();
        state.upper = kernel.as_slice().iter().map(|p| (p + width).min(1.0)).collect();
        state
    }
}
