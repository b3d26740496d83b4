//! Oracle computations against the true kernels: average payoffs, payoff
//! gradients, best responses, Nikaido-Isoda gaps and the Error/Regret/Bias
//! split of the weighted gap.
//!
//! Payoffs are linear in each player's state-action occupancy,
//! `V_i = Σ_{s,a} Π_j ρ_j(s_j, a_j) r_i(s, a)`, so best responses are linear
//! programs over the flow polytope `{ρ ≥ δ, Σρ = 1, Σ_a ρ(s,a) = Σ ρ(s',a') P(s|s',a')}`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex::{solve_lp, ConvexError, LinearConstraintSystem, Sense};
use crate::game::{JointGame, StationaryPolicy, TransitionKernel};
use crate::occupancy::{
    induced_kernel_and_policy, occupancy_from_policy, OccupancyError, OccupancyMeasure, StateActionOccupancy,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error("best-response program failed: {0}")]
    Convex(#[from] ConvexError),
    #[error("expected {expected} per-player inputs, found {found}")]
    Players { expected: usize, found: usize },
    #[error("delta {delta} leaves no feasible occupancy for player {player}")]
    Delta { player: usize, delta: f64 },
}

fn check_players(game: &JointGame, found: usize) -> Result<(), EvaluationError> {
    if found != game.num_players() {
        return Err(EvaluationError::Players { expected: game.num_players(), found });
    }
    Ok(())
}

/// True state-action occupancies `ρ_j` of each player's policy.
pub fn occupancies(game: &JointGame, policies: &[StationaryPolicy]) -> Result<Vec<StateActionOccupancy>, EvaluationError> {
    check_players(game, policies.len())?;
    policies
        .iter()
        .zip(game.players())
        .map(|(pi, player)| Ok(occupancy_from_policy(pi, player.kernel())?.1))
        .collect()
}

/// Long-run average payoffs of a joint stationary policy.
pub fn exact_value(game: &JointGame, policies: &[StationaryPolicy]) -> Result<Vec<f64>, EvaluationError> {
    let rhos = occupancies(game, policies)?;
    Ok(value_of(game, &rhos))
}

/// `V_i(ρ) = Σ_{s,a} Π_j ρ_j(s_j, a_j) r_i(s, a)` for every player.
pub fn value_of(game: &JointGame, rhos: &[StateActionOccupancy]) -> Vec<f64> {
    let n = game.num_players();
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    let mut values = vec![0.0; n];
    for idx in 0..game.joint_size() {
        game.decode_joint_index(idx, &mut states, &mut actions);
        let weight: f64 = rhos.iter().enumerate().map(|(j, rho)| rho.get(states[j], actions[j])).product();
        if weight == 0.0 {
            continue;
        }
        for (i, v) in values.iter_mut().enumerate() {
            *v += weight * game.reward_tensor(i)[idx];
        }
    }
    values
}

/// `v_i(ρ_{-i})(s_i, a_i) = Σ_{s_{-i}, a_{-i}} Π_{j≠i} ρ_j(s_j, a_j) r_i(s, a)`,
/// flattened in `(s_i, a_i)` order.
pub fn payoff_gradient(game: &JointGame, player: usize, rhos: &[StateActionOccupancy]) -> Vec<f64> {
    let n = game.num_players();
    let na = game.player(player).num_actions();
    let mut out = vec![0.0; game.player(player).num_states() * na];
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    let rewards = game.reward_tensor(player);
    for (idx, &r) in rewards.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        game.decode_joint_index(idx, &mut states, &mut actions);
        let mut weight = 1.0;
        for (j, rho) in rhos.iter().enumerate() {
            if j != player {
                weight *= rho.get(states[j], actions[j]);
            }
        }
        out[states[player] * na + actions[player]] += weight * r;
    }
    out
}

/// Copies a `(s, a)` vector across `s'`.
pub fn expand(v: &[f64], num_states: usize) -> Vec<f64> {
    v.iter().flat_map(|&x| std::iter::repeat_n(x, num_states)).collect()
}

/// The flow polytope of `kernel` in `ρ`-space with floor `δ`.
pub fn flow_polytope(kernel: &TransitionKernel, delta: f64) -> LinearConstraintSystem {
    let (ns, na) = (kernel.num_states(), kernel.num_actions());
    let dim = ns * na;
    let mut system = LinearConstraintSystem::new(dim);
    system.add_equality(vec![1.0; dim], 1.0);
    for state in 0..ns {
        let mut row = vec![0.0; dim];
        for s in 0..ns {
            for a in 0..na {
                let idx = s * na + a;
                if s == state {
                    row[idx] += 1.0;
                }
                row[idx] -= kernel.prob(s, a, state);
            }
        }
        system.add_equality(row, 0.0);
    }
    for idx in 0..dim {
        let mut row = vec![0.0; dim];
        row[idx] = -1.0;
        system.add_inequality(row, -delta);
    }
    system
}

/// `max ⟨ρ, objective⟩` over the flow polytope; returns the value and the
/// maximizing vertex.
pub fn maximize_over_flows(
    kernel: &TransitionKernel,
    objective: &[f64],
    delta: f64,
) -> Result<(f64, Vec<f64>), ConvexError> {
    let system = flow_polytope(kernel, delta);
    let sol = solve_lp(objective, &system, Sense::Maximize)?;
    Ok((sol.value, sol.point))
}

/// Best response of `player` to the others' occupancies, lifted to `q`.
pub fn best_response_value(
    game: &JointGame,
    player: usize,
    rhos: &[StateActionOccupancy],
    delta: f64,
) -> Result<(f64, OccupancyMeasure), EvaluationError> {
    check_players(game, rhos.len())?;
    let kernel = game.player(player).kernel();
    let v = payoff_gradient(game, player, rhos);
    let (value, rho) = maximize_over_flows(kernel, &v, delta).map_err(|e| match e {
        ConvexError::Infeasible { .. } => EvaluationError::Delta { player, delta },
        other => EvaluationError::Convex(other),
    })?;
    let rho = StateActionOccupancy::new(kernel.num_states(), kernel.num_actions(), rho.iter().map(|v| v.max(0.0)).collect());
    Ok((value, rho.lift(kernel)))
}

/// One evaluation of the Nikaido-Isoda gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `Σ_i [BR_i − V_i]`.
    pub gap: f64,
    pub per_player: Vec<f64>,
    pub best_response: Vec<f64>,
    pub values: Vec<f64>,
}

/// `max_{q'} Ψ(q', q)` at a joint policy, split per player.
pub fn ni_gap(game: &JointGame, policies: &[StationaryPolicy], deltas: &[f64]) -> Result<GapReport, EvaluationError> {
    check_players(game, deltas.len())?;
    let rhos = occupancies(game, policies)?;
    gap_at(game, &rhos, deltas)
}

/// [`ni_gap`] from precomputed occupancies.
pub fn gap_at(game: &JointGame, rhos: &[StateActionOccupancy], deltas: &[f64]) -> Result<GapReport, EvaluationError> {
    let values = value_of(game, rhos);
    let mut best_response = Vec::with_capacity(rhos.len());
    for (i, &delta) in deltas.iter().enumerate() {
        best_response.push(best_response_value(game, i, rhos, delta)?.0);
    }
    let per_player: Vec<f64> = best_response.iter().zip(&values).map(|(b, v)| b - v).collect();
    Ok(GapReport { gap: per_player.iter().sum(), per_player, best_response, values })
}

/// Running sums for `max_{q'} Σ_k (η^k / w) Ψ(q', q̂^k)`.
///
/// The maximum splits over players; for each it is one LP with objective
/// `Σ_k η^k v_i(ρ^k_{-i}) / w`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedGap {
    weight: f64,
    objectives: Vec<Vec<f64>>,
    values: Vec<f64>,
}

/// Per-player weighted gaps and their maximizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGapReport {
    pub gap: f64,
    pub per_player: Vec<f64>,
    /// `ρ*_i` over `(s, a)`.
    pub maximizers: Vec<Vec<f64>>,
    pub weight: f64,
}

impl WeightedGap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds episode `k` with step `eta`, gradients `v_i(ρ^k_{-i})` and
    /// values `V_i(ρ^k)`.
    pub fn push(&mut self, eta: f64, gradients: &[Vec<f64>], values: &[f64]) {
        if self.objectives.is_empty() {
            self.objectives = gradients.iter().map(|g| vec![0.0; g.len()]).collect();
            self.values = vec![0.0; values.len()];
        }
        self.weight += eta;
        for (acc, g) in self.objectives.iter_mut().zip(gradients) {
            for (a, x) in acc.iter_mut().zip(g) {
                *a += eta * x;
            }
        }
        for (acc, v) in self.values.iter_mut().zip(values) {
            *acc += eta * v;
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn evaluate(&self, game: &JointGame, deltas: &[f64]) -> Result<WeightedGapReport, EvaluationError> {
        check_players(game, deltas.len())?;
        if self.weight <= 0.0 {
            return Ok(WeightedGapReport {
                gap: 0.0,
                per_player: vec![0.0; deltas.len()],
                maximizers: Vec::new(),
                weight: 0.0,
            });
        }
        let mut per_player = Vec::with_capacity(deltas.len());
        let mut maximizers = Vec::with_capacity(deltas.len());
        for (i, &delta) in deltas.iter().enumerate() {
            let objective: Vec<f64> = self.objectives[i].iter().map(|x| x / self.weight).collect();
            let (best, rho) = maximize_over_flows(game.player(i).kernel(), &objective, delta).map_err(|e| match e {
                ConvexError::Infeasible { .. } => EvaluationError::Delta { player: i, delta },
                other => EvaluationError::Convex(other),
            })?;
            per_player.push(best - self.values[i] / self.weight);
            maximizers.push(rho);
        }
        Ok(WeightedGapReport { gap: per_player.iter().sum(), per_player, maximizers, weight: self.weight })
    }
}

/// Everything the Error/Regret/Bias split needs about one player in one
/// episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTerms {
    pub eta: f64,
    /// `ρ̂^k`: the `(s, a)` marginal of the learner's `q̂^k`.
    pub rho_hat: Vec<f64>,
    /// `ρ^k`: occupancy of `π^k` under the true kernel.
    pub rho: Vec<f64>,
    /// `v_i(ρ^k_{-i})`.
    pub gradient: Vec<f64>,
    /// The learner's reward estimate `R^k`.
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub error_term: f64,
    pub regret_term: f64,
    pub bias_term: f64,
}

impl DiagnosticsRow {
    pub fn total(&self) -> f64 {
        self.error_term + self.regret_term + self.bias_term
    }
}

/// Partial sums over `k` of
/// `Error = (η/w)⟨ρ̂ − ρ, v⟩`, `Regret = (η/w)⟨ρ* − ρ̂, R⟩` and
/// `Bias = (η/w)⟨ρ* − ρ̂, v − R⟩`, with `w` the total weight. The final
/// row sums to `Σ_k (η/w)(⟨ρ*, v⟩ − ⟨ρ, v⟩)`.
pub fn diagnostics(terms: &[EpisodeTerms], rho_star: &[f64], weight: f64) -> Vec<DiagnosticsRow> {
    let mut acc = DiagnosticsRow { error_term: 0.0, regret_term: 0.0, bias_term: 0.0 };
    let mut rows = Vec::with_capacity(terms.len());
    for t in terms {
        let scale = t.eta / weight;
        let mut error = 0.0;
        let mut regret = 0.0;
        let mut bias = 0.0;
        for idx in 0..t.rho.len() {
            let toward_star = rho_star[idx] - t.rho_hat[idx];
            error += (t.rho_hat[idx] - t.rho[idx]) * t.gradient[idx];
            regret += toward_star * t.rewards[idx];
            bias += toward_star * (t.gradient[idx] - t.rewards[idx]);
        }
        acc.error_term += scale * error;
        acc.regret_term += scale * regret;
        acc.bias_term += scale * bias;
        rows.push(acc);
    }
    rows
}

/// `‖ν̂ − ν‖₁` where `ν̂` is the state marginal of `q̂` and `ν` the stationary
/// distribution of `π^{q̂}` under the true kernel.
pub fn nu_error(q_hat: &OccupancyMeasure, kernel: &TransitionKernel) -> Result<f64, EvaluationError> {
    let nu_hat = q_hat.state_action().state_marginal();
    let policy = induced_kernel_and_policy(q_hat).policy;
    let (nu, _, _) = occupancy_from_policy(&policy, kernel)?;
    Ok(nu_hat.iter().zip(&nu.nu).map(|(a, b)| (a - b).abs()).sum())
}

/// `2|S| / (1 − e^{−1/τ}) · width`.
pub fn nu_error_bound(num_states: usize, tau: f64, width: f64) -> f64 {
    let contraction = if tau > 0.0 { (-1.0 / tau).exp() } else { 0.0 };
    2.0 * num_states as f64 / (1.0 - contraction) * width
}

/// Smallest value of `Σ_i ⟨v_i(ρ_{-i}), ρ*_i − ρ_i⟩` over `samples` random
/// stationary profiles. Nonnegative values are consistent with `ρ*` being
/// variationally stable.
pub fn stability_probe<R: Rng + ?Sized>(
    game: &JointGame,
    candidate: &[StateActionOccupancy],
    samples: usize,
    rng: &mut R,
) -> Result<f64, EvaluationError> {
    check_players(game, candidate.len())?;
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let policies: Vec<StationaryPolicy> = game
            .players()
            .iter()
            .map(|p| {
                let weights: Vec<f64> = (0..p.num_states() * p.num_actions()).map(|_| rng.random::<f64>()).collect();
                StationaryPolicy::from_weights(p.num_states(), p.num_actions(), &weights)
            })
            .collect();
        let rhos = occupancies(game, &policies)?;
        let mut total = 0.0;
        for (i, star) in candidate.iter().enumerate() {
            let v = payoff_gradient(game, i, &rhos);
            total += v.iter().zip(star.rho.iter().zip(&rhos[i].rho)).map(|(g, (s, r))| g * (s - r)).sum::<f64>();
        }
        worst = worst.min(total);
    }
    Ok(worst)
}
