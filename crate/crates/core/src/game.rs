//! Stochastic games with independent per-player chains.
//!
//! Each player `i` owns a finite state set, a finite action set and a kernel
//! `P_i(s'|s, a)` that depends on its own state and action only. Rewards
//! couple the players: `r_i(s, a)` reads the joint state and joint action.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::SplitMix;

/// Row-sum tolerance for kernels and policies held in memory.
pub const ROW_TOLERANCE: f64 = 1e-12;

/// Deterministic policies are enumerated exhaustively up to this many per
/// player when certifying the mixing bound; larger spaces are sampled.
const MAX_ENUMERATED_POLICIES: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("player {player}: kernel has {found} entries, expected {expected}")]
    KernelShape { player: usize, expected: usize, found: usize },
    #[error("player {player}: kernel row (s={state}, a={action}) sums to {sum}")]
    KernelRow { player: usize, state: usize, action: usize, sum: f64 },
    #[error("player {player}: kernel entry (s={state}, a={action}, s'={next}) = {value} is not a probability")]
    KernelEntry { player: usize, state: usize, action: usize, next: usize, value: f64 },
    #[error("policy row for state {state} sums to {sum}")]
    PolicyRow { state: usize, sum: f64 },
    #[error("policy entry (s={state}, a={action}) = {value} is negative or not finite")]
    PolicyEntry { state: usize, action: usize, value: f64 },
    #[error("policy has {found} entries, expected {expected}")]
    PolicyShape { expected: usize, found: usize },
    #[error("player {player}: needs at least one state and one action")]
    EmptyPlayer { player: usize },
    #[error("game needs at least one player")]
    NoPlayers,
    #[error("expected {expected} reward tensors, found {found}")]
    RewardCount { expected: usize, found: usize },
    #[error("reward tensor of player {player} has {found} entries, expected {expected}")]
    RewardShape { player: usize, expected: usize, found: usize },
    #[error("reward of player {player} at flat index {index} is {value}, outside [0, 1]")]
    RewardRange { player: usize, index: usize, value: f64 },
    #[error("index out of range: {what}")]
    Index { what: String },
}

/// `P(s'|s, a)` stored densely, row-major over `(s, a, s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, GameError> {
        Self::validate(0, num_states, num_actions, &probs)?;
        Ok(Self { num_states, num_actions, probs })
    }

    fn validate(player: usize, ns: usize, na: usize, probs: &[f64]) -> Result<(), GameError> {
        if ns == 0 || na == 0 {
            return Err(GameError::EmptyPlayer { player });
        }
        let expected = ns * na * ns;
        if probs.len() != expected {
            return Err(GameError::KernelShape { player, expected, found: probs.len() });
        }
        for s in 0..ns {
            for a in 0..na {
                let row = &probs[(s * na + a) * ns..(s * na + a + 1) * ns];
                for (next, &value) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(GameError::KernelEntry { player, state: s, action: a, next, value });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(GameError::KernelRow { player, state: s, action: a, sum });
                }
            }
        }
        Ok(())
    }

    /// `P(s'|s,a) = 1/|S|` everywhere.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_states as f64;
        Self { num_states, num_actions, probs: vec![p; num_states * num_actions * num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.probs[(state * self.num_actions + action) * self.num_states + next]
    }

    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    /// Flat `(s, a, s')` row-major view.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(state, action), rng)
    }

    /// State-to-state chain `p^π(s'|s) = Σ_a π(a|s) P(s'|s,a)`, row-major.
    pub fn induced_chain(&self, policy: &StationaryPolicy) -> Vec<f64> {
        let ns = self.num_states;
        let mut chain = vec![0.0; ns * ns];
        for s in 0..ns {
            for a in 0..self.num_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (next, p) in self.row(s, a).iter().enumerate() {
                    chain[s * ns + next] += w * p;
                }
            }
        }
        chain
    }
}

/// `π(a|s)`, row-major over `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, GameError> {
        if probs.len() != num_states * num_actions {
            return Err(GameError::PolicyShape { expected: num_states * num_actions, found: probs.len() });
        }
        for s in 0..num_states {
            let row = &probs[s * num_actions..(s + 1) * num_actions];
            for (a, &value) in row.iter().enumerate() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(GameError::PolicyEntry { state: s, action: a, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(GameError::PolicyRow { state: s, sum });
            }
        }
        Ok(Self { num_states, num_actions, probs })
    }

    /// Builds a policy from nonnegative row weights, normalizing each row.
    /// Rows with zero total weight become uniform.
    pub fn from_weights(num_states: usize, num_actions: usize, weights: &[f64]) -> Self {
        let mut probs = vec![0.0; num_states * num_actions];
        for s in 0..num_states {
            let row = &weights[s * num_actions..(s + 1) * num_actions];
            let total: f64 = row.iter().map(|w| w.max(0.0)).sum();
            for a in 0..num_actions {
                probs[s * num_actions + a] = if total > 0.0 {
                    row[a].max(0.0) / total
                } else {
                    1.0 / num_actions as f64
                };
            }
        }
        Self { num_states, num_actions, probs }
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, probs: vec![1.0 / num_actions as f64; num_states * num_actions] }
    }

    /// Plays `choice[s]` in state `s` with probability one.
    pub fn deterministic(num_actions: usize, choice: &[usize]) -> Self {
        let num_states = choice.len();
        let mut probs = vec![0.0; num_states * num_actions];
        for (s, &a) in choice.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self { num_states, num_actions, probs }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(state), rng)
    }

    /// FNV-1a over the IEEE bit patterns of the entries.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.probs {
            for byte in p.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        hash
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` slightly below one; fall back to the last
    // action carrying mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerModel {
    pub player_id: usize,
    kernel: TransitionKernel,
}

impl PlayerModel {
    pub fn new(player_id: usize, kernel: TransitionKernel) -> Self {
        Self { player_id, kernel }
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.num_actions
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }
}

/// An n-player game with factored transitions and dense reward tensors.
///
/// Reward tensors are flat arrays indexed `[s_1]..[s_n][a_1]..[a_n]` in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGame {
    players: Vec<PlayerModel>,
    rewards: Vec<Vec<f64>>,
}

impl JointGame {
    pub fn new(kernels: Vec<TransitionKernel>, rewards: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if kernels.is_empty() {
            return Err(GameError::NoPlayers);
        }
        for (i, k) in kernels.iter().enumerate() {
            TransitionKernel::validate(i, k.num_states, k.num_actions, &k.probs)?;
        }
        let players: Vec<PlayerModel> =
            kernels.into_iter().enumerate().map(|(i, k)| PlayerModel::new(i, k)).collect();
        if rewards.len() != players.len() {
            return Err(GameError::RewardCount { expected: players.len(), found: rewards.len() });
        }
        let size: usize = players.iter().map(|p| p.num_states() * p.num_actions()).product();
        for (player, tensor) in rewards.iter().enumerate() {
            if tensor.len() != size {
                return Err(GameError::RewardShape { player, expected: size, found: tensor.len() });
            }
            if let Some((index, &value)) = tensor.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(GameError::RewardRange { player, index, value });
            }
        }
        Ok(Self { players, rewards })
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn players(&self) -> &[PlayerModel] {
        &self.players
    }

    pub fn player(&self, i: usize) -> &PlayerModel {
        &self.players[i]
    }

    pub fn reward_tensor(&self, player: usize) -> &[f64] {
        &self.rewards[player]
    }

    /// Number of entries in each reward tensor.
    pub fn joint_size(&self) -> usize {
        self.rewards[0].len()
    }

    /// Flat reward index of a joint state and joint action.
    pub fn joint_index(&self, states: &[usize], actions: &[usize]) -> usize {
        let mut index = 0;
        for (p, &s) in self.players.iter().zip(states) {
            index = index * p.num_states() + s;
        }
        for (p, &a) in self.players.iter().zip(actions) {
            index = index * p.num_actions() + a;
        }
        index
    }

    /// Inverse of [`joint_index`](Self::joint_index).
    pub fn decode_joint_index(&self, mut index: usize, states: &mut [usize], actions: &mut [usize]) {
        for (j, p) in self.players.iter().enumerate().rev() {
            actions[j] = index % p.num_actions();
            index /= p.num_actions();
        }
        for (j, p) in self.players.iter().enumerate().rev() {
            states[j] = index % p.num_states();
            index /= p.num_states();
        }
    }

    pub fn reward(&self, player: usize, states: &[usize], actions: &[usize]) -> f64 {
        self.rewards[player][self.joint_index(states, actions)]
    }

    fn check_profile(&self, states: &[usize], actions: &[usize]) -> Result<(), GameError> {
        let n = self.num_players();
        if states.len() != n || actions.len() != n {
            return Err(GameError::Index { what: format!("profile length must be {n}") });
        }
        for (i, p) in self.players.iter().enumerate() {
            if states[i] >= p.num_states() {
                return Err(GameError::Index { what: format!("player {i} state {}", states[i]) });
            }
            if actions[i] >= p.num_actions() {
                return Err(GameError::Index { what: format!("player {i} action {}", actions[i]) });
            }
        }
        Ok(())
    }

    /// One synchronous step of the game: every player's next state is drawn
    /// from its own kernel row, and the reward vector is read at the current
    /// joint state and action.
    pub fn joint_step<R: Rng + ?Sized>(
        &self,
        states: &[usize],
        actions: &[usize],
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<f64>), GameError> {
        self.check_profile(states, actions)?;
        let index = self.joint_index(states, actions);
        let rewards = self.rewards.iter().map(|r| r[index]).collect();
        let next = self
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| p.kernel().sample(states[i], actions[i], rng))
            .collect();
        Ok((next, rewards))
    }
}

/// Findings of [`validate_game`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `min_{i, s, s'} Σ_a P_i(s'|s, a)`.
    pub alpha: f64,
    /// Mixing-time bound with the safety factor applied.
    pub tau_bound: f64,
    /// Worst one-step ℓ1 contraction coefficient over players and policies.
    pub contraction: f64,
    pub ergodic: bool,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.alpha > 0.0 && self.ergodic
    }
}

/// Multiplier applied to the certified mixing time.
pub const TAU_SAFETY_FACTOR: f64 = 2.0;

/// Checks the reachability, ergodicity and uniform-mixing assumptions.
///
/// The contraction coefficient of a chain in ℓ1 on zero-sum vectors is its
/// Dobrushin coefficient `½ max_{s,u} ‖p(s,·) − p(u,·)‖₁`. That quantity is
/// convex in each policy row, so its maximum over all stationary policies is
/// reached at a deterministic policy; enumerating those gives an exact
/// `κ = e^{-1/τ}`. The reported `tau_bound` is `TAU_SAFETY_FACTOR · τ`.
pub fn validate_game(game: &JointGame) -> AssumptionReport {
    let mut alpha = f64::INFINITY;
    let mut contraction: f64 = 0.0;
    let mut ergodic = true;
    let mut violations = Vec::new();

    for (i, player) in game.players().iter().enumerate() {
        let kernel = player.kernel();
        let (ns, na) = (kernel.num_states(), kernel.num_actions());
        for s in 0..ns {
            for next in 0..ns {
                let mass: f64 = (0..na).map(|a| kernel.prob(s, a, next)).sum();
                if mass < alpha {
                    alpha = mass;
                }
                if mass <= 0.0 {
                    violations.push(format!(
                        "player {i}: state {next} is unreachable from state {s} under every action"
                    ));
                }
            }
        }

        let mut worst: f64 = 0.0;
        let mut bad_policy: Option<Vec<usize>> = None;
        for_each_policy_probe(ns, na, |choice, policy| {
            let chain = kernel.induced_chain(policy);
            worst = worst.max(dobrushin(&chain, ns));
            if bad_policy.is_none() && !is_primitive(&chain, ns) {
                bad_policy = Some(choice.to_vec());
            }
        });
        if let Some(choice) = bad_policy {
            ergodic = false;
            violations.push(format!("player {i}: deterministic policy {choice:?} induces a non-ergodic chain"));
        }
        if worst >= 1.0 - 1e-12 {
            ergodic = false;
            violations.push(format!("player {i}: some policy induces a chain that does not contract in one step"));
        }
        contraction = contraction.max(worst);
    }

    let tau_bound = if contraction <= 0.0 {
        0.0
    } else if contraction >= 1.0 - 1e-12 {
        f64::INFINITY
    } else {
        TAU_SAFETY_FACTOR * (-1.0 / contraction.ln())
    };
    if alpha <= 0.0 {
        ergodic = false;
    }
    AssumptionReport { alpha, tau_bound, contraction, ergodic, violations }
}

/// Calls `f` on every deterministic policy when there are few enough of them,
/// otherwise on a fixed pseudo-random sample of deterministic and mixed
/// policies. The uniform policy is always included.
fn for_each_policy_probe(ns: usize, na: usize, mut f: impl FnMut(&[usize], &StationaryPolicy)) {
    let total = (na as f64).powi(ns as i32);
    let uniform = StationaryPolicy::uniform(ns, na);
    f(&[], &uniform);
    if total <= MAX_ENUMERATED_POLICIES as f64 {
        let mut choice = vec![0usize; ns];
        loop {
            f(&choice, &StationaryPolicy::deterministic(na, &choice));
            let mut pos = 0;
            while pos < ns {
                choice[pos] += 1;
                if choice[pos] < na {
                    break;
                }
                choice[pos] = 0;
                pos += 1;
            }
            if pos == ns {
                break;
            }
        }
    } else {
        let mut gen = SplitMix::new(0x5EED);
        for probe in 0..MAX_ENUMERATED_POLICIES {
            let choice: Vec<usize> = (0..ns).map(|_| ((gen.next_f64() * na as f64) as usize).min(na - 1)).collect();
            if probe % 2 == 0 {
                f(&choice, &StationaryPolicy::deterministic(na, &choice));
            } else {
                let weights: Vec<f64> = (0..ns * na).map(|_| gen.next_f64()).collect();
                f(&choice, &StationaryPolicy::from_weights(ns, na, &weights));
            }
        }
    }
}

/// `½ max_{s,u} ‖p(s,·) − p(u,·)‖₁` for a row-major chain.
pub fn dobrushin(chain: &[f64], ns: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..ns {
        for u in (s + 1)..ns {
            let dist: f64 = (0..ns).map(|t| (chain[s * ns + t] - chain[u * ns + t]).abs()).sum();
            worst = worst.max(0.5 * dist);
        }
    }
    worst
}

/// Irreducible and aperiodic: some power of the support matrix is positive.
/// Wielandt's bound `(n-1)^2 + 1` caps the power needed.
fn is_primitive(chain: &[f64], ns: usize) -> bool {
    let support: Vec<bool> = chain.iter().map(|&p| p > 0.0).collect();
    let mut power = support.clone();
    let limit = (ns - 1) * (ns - 1) + 1;
    for _ in 1..limit {
        if power.iter().all(|&b| b) {
            return true;
        }
        let mut next = vec![false; ns * ns];
        for r in 0..ns {
            for m in 0..ns {
                if power[r * ns + m] {
                    for c in 0..ns {
                        if support[m * ns + c] {
                            next[r * ns + c] = true;
                        }
                    }
                }
            }
        }
        power = next;
    }
    power.iter().all(|&b| b)
}

/// Built-in games used by tests and examples.
pub mod builtin {
    use super::*;

    /// Two players, two states and two actions each. Action 0 stays in the
    /// current state with probability 0.9, action 1 with probability 0.1.
    /// Player 0 earns 1 when both players occupy the same state, player 1
    /// earns 1 otherwise.
    pub fn g1() -> JointGame {
        let kernel = TransitionKernel {
            num_states: 2,
            num_actions: 2,
            probs: vec![0.9, 0.1, 0.1, 0.9, 0.1, 0.9, 0.9, 0.1],
        };
        let mut r0 = vec![0.0; 16];
        let mut r1 = vec![0.0; 16];
        for s0 in 0..2 {
            for s1 in 0..2 {
                for a0 in 0..2 {
                    for a1 in 0..2 {
                        let idx = ((s0 * 2 + s1) * 2 + a0) * 2 + a1;
                        let matched = if s0 == s1 { 1.0 } else { 0.0 };
                        r0[idx] = matched;
                        r1[idx] = 1.0 - matched;
                    }
                }
            }
        }
        JointGame::new(vec![kernel.clone(), kernel], vec![r0, r1]).expect("g1 is well formed")
    }

    /// Matching pennies with one state per player: player 0 earns 1 when the
    /// actions match, player 1 earns 1 when they differ.
    pub fn g2() -> JointGame {
        let kernel = TransitionKernel { num_states: 1, num_actions: 2, probs: vec![1.0, 1.0] };
        let r0 = vec![1.0, 0.0, 0.0, 1.0];
        let r1 = r0.iter().map(|r| 1.0 - r).collect();
        JointGame::new(vec![kernel.clone(), kernel], vec![r0, r1]).expect("g2 is well formed")
    }

    /// Three players with two states and two actions each. Kernels and
    /// rewards come from a fixed SplitMix64 sequence; kernel entries are kept
    /// at least 0.1 so every state stays reachable.
    pub fn g3() -> JointGame {
        let mut gen = SplitMix::new(0x6733);
        let kernels = (0..3)
            .map(|_| {
                let mut probs = Vec::with_capacity(8);
                for _ in 0..4 {
                    let stay = 0.1 + 0.8 * gen.next_f64();
                    probs.push(stay);
                    probs.push(1.0 - stay);
                }
                TransitionKernel { num_states: 2, num_actions: 2, probs }
            })
            .collect();
        let rewards = (0..3).map(|_| (0..64).map(|_| gen.next_f64()).collect()).collect();
        JointGame::new(kernels, rewards).expect("g3 is well formed")
    }

    /// A single player with one state and one action; reward `value`.
    pub fn trivial(value: f64) -> JointGame {
        let kernel = TransitionKernel { num_states: 1, num_actions: 1, probs: vec![1.0] };
        JointGame::new(vec![kernel], vec![vec![value]]).expect("trivial game is well formed")
    }

    pub fn by_name(name: &str) -> Option<JointGame> {
        match name.to_ascii_lowercase().as_str() {
            "g1" => Some(g1()),
            "g2" => Some(g2()),
            "g3" => Some(g3()),
            _ => None,
        }
    }
}
