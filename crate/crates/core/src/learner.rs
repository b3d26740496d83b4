//! One player's episodic learner.
//!
//! Each episode the learner plays the policy induced by its occupancy
//! estimate `q̂`, discards the first `d` steps so the chain can mix, then
//! records the first reward seen at every state-action pair. Once all pairs
//! are covered and the simulator signals the end of the episode, the learner
//! tightens its confidence set and takes a projected gradient step on `q̂`.
//!
//! A learner only ever sees its own state, action, reward and next state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{ConfidenceError, ConfidenceState, ScheduleMode, WidthSchedule};
use crate::convex::{self, ConvexError, RegularizerSpec};
use crate::game::StationaryPolicy;
use crate::occupancy::{induced_kernel_and_policy, OccupancyError, OccupancyMeasure, ShrunkPolytopeSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error("projection failed: {0}")]
    Convex(#[from] ConvexError),
    #[error("observation ({state}, {action}, {next}) out of range for {num_states} states and {num_actions} actions")]
    Index { state: usize, action: usize, next: usize, num_states: usize, num_actions: usize },
    #[error("episode {episode} ended before every state-action pair was visited")]
    Incomplete { episode: usize },
}

/// Step sizes `η^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    /// `c / √K` for every episode.
    Constant { c: f64, horizon: usize },
    /// `c / (k^p ln(k + 1))`.
    Decaying { c: f64, p: f64 },
}

impl EtaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            EtaSchedule::Constant { c, horizon } => c / (horizon as f64).sqrt(),
            EtaSchedule::Decaying { c, p } => {
                let k = k.max(1) as f64;
                c / (k.powf(p) * (k + 1.0).ln())
            }
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        match *self {
            EtaSchedule::Constant { c, horizon } => {
                if !(c > 0.0 && c.is_finite()) || horizon == 0 {
                    return Err(LearnerError::Config(format!("step size c/sqrt(K) needs c > 0 and K ≥ 1, got c={c}, K={horizon}")));
                }
            }
            EtaSchedule::Decaying { c, p } => {
                if !(c > 0.0 && c.is_finite()) || !(p > 0.5 && p <= 1.0) {
                    return Err(LearnerError::Config(format!("decaying step size needs c > 0 and p in (1/2, 1], got c={c}, p={p}")));
                }
            }
        }
        Ok(())
    }
}

/// Warm-up lengths `d` or `d^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarmupSchedule {
    Constant { steps: usize },
    /// `⌈2τ ln k⌉`.
    Logarithmic { tau: f64 },
}

impl WarmupSchedule {
    /// `d = τ ln((1 − e^{−1/τ}) √K / (2 min_i |S_i|))`, rounded up and
    /// floored at zero.
    pub fn finite(tau: f64, horizon: usize, min_states: usize) -> Self {
        let steps = if tau > 0.0 {
            let inner = (1.0 - (-1.0 / tau).exp()) * (horizon as f64).sqrt() / (2.0 * min_states as f64);
            (tau * inner.ln()).max(0.0).ceil() as usize
        } else {
            0
        };
        WarmupSchedule::Constant { steps }
    }

    pub fn length(&self, k: usize) -> usize {
        match *self {
            WarmupSchedule::Constant { steps } => steps,
            WarmupSchedule::Logarithmic { tau } => (2.0 * tau * (k.max(1) as f64).ln()).max(0.0).ceil() as usize,
        }
    }
}

/// `δ = ε / (4 |S| |A| n (τ + 1))`.
pub fn default_delta(epsilon: f64, num_states: usize, num_actions: usize, num_players: usize, tau: f64) -> f64 {
    epsilon / (4.0 * (num_states * num_actions * num_players) as f64 * (tau + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub delta: f64,
    pub eta: EtaSchedule,
    pub warmup: WarmupSchedule,
    pub width: WidthSchedule,
    pub epsilon_target: f64,
    pub regularizer: RegularizerSpec,
    pub rng_seed: u64,
}

/// Game-level inputs shared by every player's configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerShape {
    pub num_players: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// `min_i |S_i|` over all players.
    pub min_states: usize,
    pub tau: f64,
}

impl LearnerConfig {
    /// Fixed-horizon parameters: `η = c/√K`, constant warm-up `d`, widths
    /// with `ln(nK|A||S|²)`. `delta = None` uses [`default_delta`].
    pub fn finite(
        shape: LearnerShape,
        horizon: usize,
        gamma: f64,
        epsilon: f64,
        c: f64,
        delta: Option<f64>,
        rng_seed: u64,
    ) -> Result<Self, LearnerError> {
        let width = WidthSchedule::new(
            ScheduleMode::Finite { horizon },
            shape.num_players,
            gamma,
            shape.num_states,
            shape.num_actions,
        )?;
        let config = Self {
            delta: delta.unwrap_or_else(|| {
                default_delta(epsilon, shape.num_states, shape.num_actions, shape.num_players, shape.tau)
            }),
            eta: EtaSchedule::Constant { c, horizon },
            warmup: WarmupSchedule::finite(shape.tau, horizon, shape.min_states),
            width,
            epsilon_target: epsilon,
            regularizer: RegularizerSpec::quadratic(),
            rng_seed,
        };
        config.validate(shape.num_states, shape.num_actions)?;
        Ok(config)
    }

    /// Open-ended parameters: `η^k = c/(k^p ln(k+1))`, `d^k = ⌈2τ ln k⌉`,
    /// widths with `ln(2nk²|A||S|²)`.
    pub fn asymptotic(
        shape: LearnerShape,
        gamma: f64,
        epsilon: f64,
        c: f64,
        p: f64,
        delta: Option<f64>,
        rng_seed: u64,
    ) -> Result<Self, LearnerError> {
        let width =
            WidthSchedule::new(ScheduleMode::Asymptotic, shape.num_players, gamma, shape.num_states, shape.num_actions)?;
        let config = Self {
            delta: delta.unwrap_or_else(|| {
                default_delta(epsilon, shape.num_states, shape.num_actions, shape.num_players, shape.tau)
            }),
            eta: EtaSchedule::Decaying { c, p },
            warmup: WarmupSchedule::Logarithmic { tau: shape.tau },
            width,
            epsilon_target: epsilon,
            regularizer: RegularizerSpec::quadratic(),
            rng_seed,
        };
        config.validate(shape.num_states, shape.num_actions)?;
        Ok(config)
    }

    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<(), LearnerError> {
        self.eta.validate()?;
        let limit = 1.0 / (num_states * num_actions) as f64;
        if !(self.delta > 0.0 && self.delta < limit) {
            return Err(LearnerError::Config(format!("delta must lie in (0, {limit}), got {}", self.delta)));
        }
        if self.width.num_states != num_states || self.width.num_actions != num_actions {
            return Err(LearnerError::Config("width schedule shape does not match the player".into()));
        }
        if let WarmupSchedule::Logarithmic { tau } = self.warmup {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(LearnerError::Config(format!("mixing time must be finite and nonnegative, got {tau}")));
            }
        }
        Ok(())
    }

    pub fn polytope(&self, num_states: usize, num_actions: usize) -> ShrunkPolytopeSpec {
        ShrunkPolytopeSpec { delta: self.delta, num_states, num_actions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warming,
    Covering,
    Done,
}

/// What a learner sees after one step of the game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Per-episode summary returned by [`Learner::end_episode`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub episode: usize,
    /// Steps this learner observed in the episode.
    pub length: usize,
    /// Step at which this learner had covered every pair.
    pub local_length: usize,
    pub eta: f64,
    pub update_norm: f64,
    pub max_width: f64,
    pub min_width: f64,
    /// Set when the confidence set collapsed and was reset this episode.
    pub collapse: Option<ConfidenceError>,
    /// The reward estimate `R^k` over `(s, a)`.
    pub rewards: Vec<f64>,
    /// The occupancy estimate the episode was played with.
    pub q_played: OccupancyMeasure,
}

#[derive(Debug, Clone)]
pub struct Learner {
    num_states: usize,
    num_actions: usize,
    config: LearnerConfig,
    spec: ShrunkPolytopeSpec,
    q_hat: OccupancyMeasure,
    policy: StationaryPolicy,
    confidence: ConfidenceState,
    rewards: Vec<f64>,
    visited: Vec<bool>,
    unvisited: usize,
    phase: Phase,
    step: usize,
    local_length: usize,
    warmup: usize,
    episode: usize,
    rng: ChaCha8Rng,
}

impl Learner {
    /// Starts from the uniform occupancy `1/(|A||S|²)` projected onto the
    /// shrunk polytope.
    pub fn new(num_states: usize, num_actions: usize, config: LearnerConfig) -> Result<Self, LearnerError> {
        config.validate(num_states, num_actions)?;
        let spec = config.polytope(num_states, num_actions);
        let confidence = ConfidenceState::new(num_states, num_actions);
        let uniform = OccupancyMeasure::uniform(num_states, num_actions);
        let system = confidence.as_constraints(&spec)?;
        let q = if system.is_feasible_point(&uniform.q) {
            uniform.q
        } else {
            convex::project(&uniform.q, &system)?.0
        };
        let q_hat = OccupancyMeasure::new(num_states, num_actions, q);
        let policy = induced_kernel_and_policy(&q_hat).policy;
        let pairs = num_states * num_actions;
        let mut learner = Self {
            num_states,
            num_actions,
            config,
            spec,
            q_hat,
            policy,
            confidence,
            rewards: vec![0.0; pairs],
            visited: vec![false; pairs],
            unvisited: pairs,
            phase: Phase::Warming,
            step: 0,
            local_length: 0,
            warmup: 0,
            episode: 1,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        };
        learner.begin_episode();
        Ok(learner)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn q_hat(&self) -> &OccupancyMeasure {
        &self.q_hat
    }

    pub fn policy(&self) -> &StationaryPolicy {
        &self.policy
    }

    pub fn confidence(&self) -> &ConfidenceState {
        &self.confidence
    }

    pub fn reward_estimate(&self) -> &[f64] {
        &self.rewards
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn step_in_episode(&self) -> usize {
        self.step
    }

    pub fn unvisited(&self) -> usize {
        self.unvisited
    }

    pub fn warmup_length(&self) -> usize {
        self.warmup
    }

    /// Recomputes `π^k` from `q̂^k` and resets the per-episode state.
    pub fn begin_episode(&mut self) {
        self.policy = induced_kernel_and_policy(&self.q_hat).policy;
        self.rewards.fill(0.0);
        self.visited.fill(false);
        self.unvisited = self.visited.len();
        self.step = 0;
        self.local_length = 0;
        self.warmup = self.config.warmup.length(self.episode);
        self.phase = if self.warmup == 0 { Phase::Covering } else { Phase::Warming };
    }

    /// Samples an action from `π^k(·|state)` with the learner's own stream.
    pub fn act(&mut self, state: usize) -> usize {
        self.policy.sample(state, &mut self.rng)
    }

    /// Feeds one transition. Returns `true` once every pair has been
    /// covered in this episode. A learner that is done keeps counting
    /// transitions but no longer writes rewards.
    pub fn observe(&mut self, obs: Observation) -> Result<bool, LearnerError> {
        let Observation { state, action, reward, next_state } = obs;
        if state >= self.num_states || next_state >= self.num_states || action >= self.num_actions {
            return Err(LearnerError::Index {
                state,
                action,
                next: next_state,
                num_states: self.num_states,
                num_actions: self.num_actions,
            });
        }
        self.confidence.record_transition(state, action, next_state);
        let pair = state * self.num_actions + action;
        if self.phase == Phase::Covering && !self.visited[pair] {
            self.visited[pair] = true;
            self.unvisited -= 1;
            self.rewards[pair] = reward;
        }
        self.step += 1;
        if self.phase == Phase::Warming && self.step >= self.warmup {
            self.phase = Phase::Covering;
        }
        if self.phase == Phase::Covering && self.unvisited == 0 {
            self.phase = Phase::Done;
            self.local_length = self.step;
        }
        Ok(self.phase == Phase::Done)
    }

    /// Confidence update and mirror-descent step, then starts the next
    /// episode. A collapsed confidence set is repaired and reported in the
    /// returned summary rather than treated as fatal.
    pub fn end_episode(&mut self) -> Result<EpisodeReport, LearnerError> {
        if self.phase != Phase::Done {
            return Err(LearnerError::Incomplete { episode: self.episode });
        }
        let collapse = self.confidence.end_episode_update(&self.config.width).err();
        let system = self.confidence.as_constraints(&self.spec)?;
        let ns = self.num_states;
        let gradient: Vec<f64> = self.rewards.iter().flat_map(|&r| std::iter::repeat_n(r, ns)).collect();
        let eta = self.config.eta.at(self.episode);
        let next = convex::omd_update(&self.q_hat.q, &gradient, eta, &system, &self.config.regularizer)?;
        let diff: Vec<f64> = self.q_hat.q.iter().zip(&next).map(|(a, b)| a - b).collect();
        let update_norm = convex::norm(&diff);
        let next = OccupancyMeasure::new(self.num_states, self.num_actions, next);
        let q_played = std::mem::replace(&mut self.q_hat, next);
        let report = EpisodeReport {
            episode: self.episode,
            length: self.step,
            local_length: self.local_length,
            eta,
            update_norm,
            max_width: self.confidence.max_width(),
            min_width: self.confidence.min_width(),
            collapse,
            rewards: self.rewards.clone(),
            q_played,
        };
        self.episode += 1;
        self.begin_episode();
        Ok(report)
    }

    /// Starts a new episode without any update, keeping the counters; for
    /// experiments with fixed policies.
    pub fn restart_episode(&mut self) {
        self.begin_episode();
    }

    /// Replaces the occupancy estimate; for tests and oracle experiments.
    pub fn set_q_hat(&mut self, q: OccupancyMeasure) {
        self.q_hat = q;
        self.begin_episode();
    }

    /// Replaces the confidence state; for tests and oracle experiments.
    pub fn set_confidence(&mut self, confidence: ConfidenceState) {
        self.confidence = confidence;
    }
}
