//! Runs every player's learner against the joint game with a global
//! end-of-episode barrier, and records metrics.
//!
//! An episode ends once every learner has covered all of its state-action
//! pairs. Learners that finish early keep playing their current policy, so
//! their counters keep growing, until the last one is done.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::WidthConstant;
use crate::evaluation::{self, EpisodeTerms, EvaluationError, WeightedGap};
use crate::game::{validate_game, GameError, JointGame, StationaryPolicy};
use crate::learner::{Learner, LearnerConfig, LearnerError, LearnerShape, Observation, WarmupSchedule};
use crate::occupancy::{induced_kernel_and_policy, OccupancyMeasure};
use crate::record::{EpisodeRow, Failure, RunRecord, Snapshot};
use crate::seed;

/// Episodes longer than this abort the run.
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("game violates the standing assumptions: {0}")]
    Assumption(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("player {player}, episode {episode}: {source}")]
    Learner { player: usize, episode: usize, source: LearnerError },
    #[error("oracle evaluation failed at episode {episode}: {source}")]
    Evaluation { episode: usize, source: EvaluationError },
    #[error("episode {episode} exceeded {steps} steps without covering every pair")]
    EpisodeCap { episode: usize, steps: usize },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("no snapshot for episode {requested}; stored episodes: {available:?}")]
    MissingSnapshot { requested: usize, available: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Finite,
    Asymptotic,
}

/// User-facing knobs from which per-player configurations are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    pub mode: Mode,
    pub episodes: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    /// Exponent of the decaying step size.
    pub p: f64,
    /// `None` uses the default `ε / (4|S||A|n(τ+1))` per player.
    pub delta: Option<f64>,
    /// Overrides the warm-up schedule with a constant.
    pub warmup: Option<usize>,
    /// Overrides the oracle mixing-time bound.
    pub tau: Option<f64>,
    pub width_constant: WidthConstant,
}

impl Default for RunParameters {
    fn default() -> Self {
        Self {
            mode: Mode::Finite,
            episodes: 100,
            gamma: 0.1,
            epsilon: 0.1,
            c: 1.0,
            p: 0.75,
            delta: None,
            warmup: None,
            tau: None,
            width_constant: WidthConstant::Hoeffding,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub learner_configs: Vec<LearnerConfig>,
    pub episodes: usize,
    pub master_seed: u64,
    pub oracle: bool,
    /// Stride for weighted-gap evaluations and `q̂` snapshots.
    pub record_every: usize,
    /// Mixing-time bound used by the diagnostics.
    pub tau: f64,
    pub max_episode_steps: usize,
}

impl SimulationConfig {
    /// Derives one learner configuration per player. Action streams are
    /// seeded from `master_seed` and the player index.
    pub fn build(game: &JointGame, params: &RunParameters, master_seed: u64) -> Result<Self, SimulationError> {
        let report = validate_game(game);
        if !report.holds() {
            return Err(SimulationError::Assumption(report.violations.join("; ")));
        }
        if params.episodes == 0 {
            return Err(SimulationError::Config("episode count must be at least 1".into()));
        }
        let tau = params.tau.unwrap_or(report.tau_bound);
        let n = game.num_players();
        let min_states = game.players().iter().map(|p| p.num_states()).min().unwrap_or(1);
        let mut learner_configs = Vec::with_capacity(n);
        for (i, player) in game.players().iter().enumerate() {
            let shape = LearnerShape {
                num_players: n,
                num_states: player.num_states(),
                num_actions: player.num_actions(),
                min_states,
                tau,
            };
            let rng_seed = seed::derive(master_seed, &[seed::STREAM_ACTIONS, i as u64]);
            let built = match params.mode {
                Mode::Finite => LearnerConfig::finite(
                    shape,
                    params.episodes,
                    params.gamma,
                    params.epsilon,
                    params.c,
                    params.delta,
                    rng_seed,
                ),
                Mode::Asymptotic => {
                    LearnerConfig::asymptotic(shape, params.gamma, params.epsilon, params.c, params.p, params.delta, rng_seed)
                }
            };
            let mut config = built.map_err(|e| SimulationError::Config(format!("player {i}: {e}")))?;
            config.width = config.width.with_constant(params.width_constant);
            if let Some(steps) = params.warmup {
                config.warmup = WarmupSchedule::Constant { steps };
            }
            learner_configs.push(config);
        }
        Ok(Self {
            learner_configs,
            episodes: params.episodes,
            master_seed,
            oracle: true,
            record_every: 1,
            tau,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
        })
    }
}

/// Runs `config.episodes` episodes. Deterministic given the master seed.
///
/// A collapsed confidence set is logged as a failure and the run goes on;
/// projection or oracle failures stop the run.
pub fn run(game: &JointGame, config: &SimulationConfig) -> Result<RunRecord, SimulationError> {
    let report = validate_game(game);
    if !report.holds() {
        return Err(SimulationError::Assumption(report.violations.join("; ")));
    }
    let n = game.num_players();
    if config.learner_configs.len() != n {
        return Err(SimulationError::Config(format!(
            "{} learner configurations for {n} players",
            config.learner_configs.len()
        )));
    }
    let stride = config.record_every.max(1);
    let mut learners = Vec::with_capacity(n);
    for (i, (player, cfg)) in game.players().iter().zip(&config.learner_configs).enumerate() {
        let learner = Learner::new(player.num_states(), player.num_actions(), *cfg)
            .map_err(|source| SimulationError::Learner { player: i, episode: 1, source })?;
        learners.push(learner);
    }
    let deltas: Vec<f64> = config.learner_configs.iter().map(|c| c.delta).collect();
    let mut record = RunRecord::new(n, config.master_seed, config.tau, deltas.clone());
    let mut env = seed::stream(config.master_seed, &[seed::STREAM_KERNEL]);

    let mut states = vec![0usize; n];
    let mut actions = vec![0usize; n];
    let mut done = vec![false; n];
    let mut steps_total: u64 = 0;
    let mut weighted = WeightedGap::new();
    let mut terms: Vec<Vec<EpisodeTerms>> = vec![Vec::new(); n];
    let mut prev_width = vec![1.0f64; n];

    for k in 1..=config.episodes {
        if k == 1 || k % stride == 0 || k == config.episodes {
            record.snapshots.push(Snapshot {
                k,
                q_hat: learners.iter().map(|l| l.q_hat().q.clone()).collect(),
                shapes: learners.iter().map(|l| (l.num_states(), l.num_actions())).collect(),
            });
        }
        done.fill(false);
        let mut length = 0usize;
        loop {
            for (i, learner) in learners.iter_mut().enumerate() {
                actions[i] = learner.act(states[i]);
            }
            let (next, rewards) = game.joint_step(&states, &actions, &mut env)?;
            for (i, learner) in learners.iter_mut().enumerate() {
                let obs = Observation { state: states[i], action: actions[i], reward: rewards[i], next_state: next[i] };
                done[i] = learner
                    .observe(obs)
                    .map_err(|source| SimulationError::Learner { player: i, episode: k, source })?;
            }
            states = next;
            length += 1;
            if done.iter().all(|&d| d) {
                break;
            }
            if length >= config.max_episode_steps {
                return Err(SimulationError::EpisodeCap { episode: k, steps: length });
            }
        }
        steps_total += length as u64;

        let policies: Vec<StationaryPolicy> = learners.iter().map(|l| l.policy().clone()).collect();
        let mut reports = Vec::with_capacity(n);
        for (i, learner) in learners.iter_mut().enumerate() {
            let rep = learner.end_episode().map_err(|source| SimulationError::Learner { player: i, episode: k, source })?;
            if let Some(collapse) = &rep.collapse {
                record.failures.push(Failure { episode: k, player: Some(i), message: collapse.to_string() });
            }
            reports.push(rep);
        }
        let coverage: Vec<bool> =
            learners.iter().zip(game.players()).map(|(l, p)| l.confidence().contains(p.kernel())).collect();

        let mut row = EpisodeRow {
            k,
            steps_total,
            tau_k: length,
            update_norm: reports.iter().map(|r| r.update_norm).collect(),
            max_width: reports.iter().map(|r| r.max_width).collect(),
            min_width: reports.iter().map(|r| r.min_width).collect(),
            coverage,
            local_lengths: reports.iter().map(|r| r.local_length).collect(),
            policy_fingerprints: policies.iter().map(|p| p.fingerprint()).collect(),
            ni_gap_weighted: None,
            ni_gap_instant: None,
            diagnostics: None,
            nu_error: None,
            nu_bound: None,
        };

        if config.oracle {
            let eval_err = |source| SimulationError::Evaluation { episode: k, source };
            let rhos = evaluation::occupancies(game, &policies).map_err(eval_err)?;
            let gradients: Vec<Vec<f64>> = (0..n).map(|i| evaluation::payoff_gradient(game, i, &rhos)).collect();
            let values = evaluation::value_of(game, &rhos);
            weighted.push(reports[0].eta, &gradients, &values);
            row.ni_gap_instant = Some(evaluation::gap_at(game, &rhos, &deltas).map_err(eval_err)?.gap);
            let mut nu_error = Vec::with_capacity(n);
            let mut nu_bound = Vec::with_capacity(n);
            for i in 0..n {
                let rep = &reports[i];
                terms[i].push(EpisodeTerms {
                    eta: rep.eta,
                    rho_hat: rep.q_played.state_action().rho,
                    rho: rhos[i].rho.clone(),
                    gradient: gradients[i].clone(),
                    rewards: rep.rewards.clone(),
                });
                let kernel = game.player(i).kernel();
                nu_error.push(evaluation::nu_error(&rep.q_played, kernel).map_err(eval_err)?);
                nu_bound.push(evaluation::nu_error_bound(kernel.num_states(), config.tau, prev_width[i]));
            }
            row.nu_error = Some(nu_error);
            row.nu_bound = Some(nu_bound);
            if k % stride == 0 || k == config.episodes {
                row.ni_gap_weighted = Some(weighted.evaluate(game, &deltas).map_err(eval_err)?.gap);
            }
        }
        prev_width = reports.iter().map(|r| r.max_width).collect();
        record.push(row);
    }

    if config.oracle {
        let last = config.episodes;
        let final_report =
            weighted.evaluate(game, &deltas).map_err(|source| SimulationError::Evaluation { episode: last, source })?;
        let per_player: Vec<Vec<_>> = (0..n)
            .map(|i| evaluation::diagnostics(&terms[i], &final_report.maximizers[i], final_report.weight))
            .collect();
        for (idx, row) in record.rows.iter_mut().enumerate() {
            row.diagnostics = Some(per_player.iter().map(|d| d[idx]).collect());
        }
        record.final_weighted = Some(final_report);
    }
    Ok(record)
}

/// The joint policy `π^k` reconstructed from the stored `q̂^k`.
pub fn replay_policies(record: &RunRecord, game: &JointGame, k: usize) -> Result<Vec<StationaryPolicy>, SimulationError> {
    let snapshot = record.snapshots.iter().find(|s| s.k == k).ok_or_else(|| SimulationError::MissingSnapshot {
        requested: k,
        available: record.snapshots.iter().map(|s| s.k).collect(),
    })?;
    if snapshot.q_hat.len() != game.num_players() {
        return Err(SimulationError::Config("snapshot does not match the game".into()));
    }
    Ok(snapshot
        .q_hat
        .iter()
        .zip(&snapshot.shapes)
        .map(|(q, &(ns, na))| induced_kernel_and_policy(&OccupancyMeasure::new(ns, na, q.clone())).policy)
        .collect())
}

/// Plays fixed policies for `episodes` episodes with warm-up `warmup` and
/// returns every player's reward estimate `R` per episode.
pub fn sample_reward_estimates(
    game: &JointGame,
    policies: &[StationaryPolicy],
    warmup: usize,
    episodes: usize,
    master_seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>, SimulationError> {
    let n = game.num_players();
    if policies.len() != n {
        return Err(SimulationError::Config(format!("{} policies for {n} players", policies.len())));
    }
    let params = RunParameters { episodes, warmup: Some(warmup), delta: Some(1e-6), ..RunParameters::default() };
    let config = SimulationConfig::build(game, &params, master_seed)?;
    let mut learners = Vec::with_capacity(n);
    for (i, ((player, cfg), policy)) in game.players().iter().zip(&config.learner_configs).zip(policies).enumerate() {
        let mut learner = Learner::new(player.num_states(), player.num_actions(), *cfg)
            .map_err(|source| SimulationError::Learner { player: i, episode: 1, source })?;
        let (_, _, q) = crate::occupancy::occupancy_from_policy(policy, player.kernel())
            .map_err(|e| SimulationError::Learner { player: i, episode: 1, source: e.into() })?;
        learner.set_q_hat(q);
        learners.push(learner);
    }
    let mut env = seed::stream(master_seed, &[seed::STREAM_KERNEL]);
    let mut states = vec![0usize; n];
    let mut actions = vec![0usize; n];
    let mut done = vec![false; n];
    let mut out = vec![Vec::with_capacity(episodes); n];
    for k in 1..=episodes {
        done.fill(false);
        let mut length = 0;
        while !done.iter().all(|&d| d) {
            for (i, learner) in learners.iter_mut().enumerate() {
                actions[i] = learner.act(states[i]);
            }
            let (next, rewards) = game.joint_step(&states, &actions, &mut env)?;
            for (i, learner) in learners.iter_mut().enumerate() {
                let obs = Observation { state: states[i], action: actions[i], reward: rewards[i], next_state: next[i] };
                done[i] = learner
                    .observe(obs)
                    .map_err(|source| SimulationError::Learner { player: i, episode: k, source })?;
            }
            states = next;
            length += 1;
            if length >= config.max_episode_steps {
                return Err(SimulationError::EpisodeCap { episode: k, steps: length });
            }
        }
        for (i, learner) in learners.iter_mut().enumerate() {
            out[i].push(learner.reward_estimate().to_vec());
            learner.restart_episode();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::builtin;

    fn small(game: &JointGame, episodes: usize, seed: u64) -> SimulationConfig {
        let params = RunParameters { episodes, delta: Some(0.02), ..RunParameters::default() };
        SimulationConfig::build(game, &params, seed).unwrap()
    }

    #[test]
    fn trivial_game_episode_length() {
        let g = builtin::trivial(0.3);
        let params = RunParameters { episodes: 5, warmup: Some(7), delta: Some(0.5), ..RunParameters::default() };
        let config = SimulationConfig::build(&g, &params, 1).unwrap();
        let rec = run(&g, &config).unwrap();
        assert!(rec.rows.iter().all(|r| r.tau_k == 8));
        assert!(rec.rows.iter().all(|r| r.update_norm[0] < 1e-12));
    }

    #[test]
    fn deterministic_under_seed() {
        let g = builtin::g1();
        let a = run(&g, &small(&g, 10, 42)).unwrap();
        let b = run(&g, &small(&g, 10, 42)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
        let c = run(&g, &small(&g, 10, 43)).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn replay_matches_logged_policies() {
        let g = builtin::g1();
        let mut config = small(&g, 12, 3);
        config.record_every = 4;
        let rec = run(&g, &config).unwrap();
        let first = replay_policies(&rec, &g, 1).unwrap();
        assert!(first.iter().all(|p| p.as_slice().iter().all(|&x| (x - 0.5).abs() < 1e-12)));
        for k in [1, 4, 8, 12] {
            let replayed = replay_policies(&rec, &g, k).unwrap();
            let fps: Vec<u64> = replayed.iter().map(|p| p.fingerprint()).collect();
            assert_eq!(fps, rec.rows[k - 1].policy_fingerprints);
        }
        let err = replay_policies(&rec, &g, 5).unwrap_err();
        assert!(matches!(err, SimulationError::MissingSnapshot { requested: 5, .. }));
    }

    #[test]
    fn diagnostics_sum_to_weighted_gap() {
        let g = builtin::g1();
        let rec = run(&g, &small(&g, 20, 8)).unwrap();
        let fin = rec.final_weighted.as_ref().unwrap();
        let last = rec.rows.last().unwrap().diagnostics.as_ref().unwrap();
        for i in 0..2 {
            assert!((last[i].total() - fin.per_player[i]).abs() < 1e-9);
        }
        assert_eq!(rec.final_gap(), Some(fin.gap));
    }
}
