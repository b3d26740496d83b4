//! Occupancy measures of a single player.
//!
//! For a stationary policy `π` and kernel `P` with stationary state
//! distribution `ν`, the occupancies are `ρ(s,a) = ν(s) π(a|s)` and
//! `q(s,a,s') = ρ(s,a) P(s'|s,a)`. The set of feasible `q` is a polytope
//! (normalization plus flow balance); every point of it induces a kernel and
//! a policy whose occupancy measure is that point again.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::ConfidenceState;
use crate::game::{StationaryPolicy, TransitionKernel};

/// Tolerance used when a membership verdict is collapsed to a boolean.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-8;

const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OccupancyError {
    #[error("induced chain has no unique stationary distribution (smallest pivot {pivot:e})")]
    NotErgodic { pivot: f64 },
    #[error("shape mismatch: policy is {policy:?}, kernel is {kernel:?}")]
    Shape { policy: (usize, usize), kernel: (usize, usize) },
    #[error("delta {delta} must lie in (0, 1/(|S||A|)) = (0, {limit})")]
    Delta { delta: f64, limit: f64 },
}

/// `ν` over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateOccupancy {
    pub nu: Vec<f64>,
}

/// `ρ` over `(s, a)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionOccupancy {
    num_states: usize,
    num_actions: usize,
    pub rho: Vec<f64>,
}

impl StateActionOccupancy {
    pub fn new(num_states: usize, num_actions: usize, rho: Vec<f64>) -> Self {
        assert_eq!(rho.len(), num_states * num_actions, "rho shape");
        Self { num_states, num_actions, rho }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.rho[state * self.num_actions + action]
    }

    /// `ν(s) = Σ_a ρ(s,a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.rho.chunks(self.num_actions).map(|row| row.iter().sum()).collect()
    }

    /// `q(s,a,s') = ρ(s,a) P(s'|s,a)`.
    pub fn lift(&self, kernel: &TransitionKernel) -> OccupancyMeasure {
        let ns = self.num_states;
        let mut q = vec![0.0; self.rho.len() * ns];
        for s in 0..ns {
            for a in 0..self.num_actions {
                let mass = self.get(s, a);
                for (next, p) in kernel.row(s, a).iter().enumerate() {
                    q[(s * self.num_actions + a) * ns + next] = mass * p;
                }
            }
        }
        OccupancyMeasure { num_states: ns, num_actions: self.num_actions, q }
    }
}

/// `q` over `(s, a, s')`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    num_states: usize,
    num_actions: usize,
    pub q: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(num_states: usize, num_actions: usize, q: Vec<f64>) -> Self {
        assert_eq!(q.len(), num_states * num_actions * num_states, "q shape");
        Self { num_states, num_actions, q }
    }

    /// Every entry `1/(|A||S|^2)`.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let len = num_states * num_actions * num_states;
        Self { num_states, num_actions, q: vec![1.0 / len as f64; len] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn index(&self, state: usize, action: usize, next: usize) -> usize {
        (state * self.num_actions + action) * self.num_states + next
    }

    pub fn get(&self, state: usize, action: usize, next: usize) -> f64 {
        self.q[self.index(state, action, next)]
    }

    /// `ρ(s,a) = Σ_{s'} q(s,a,s')`.
    pub fn state_action(&self) -> StateActionOccupancy {
        let rho = self.q.chunks(self.num_states).map(|row| row.iter().sum()).collect();
        StateActionOccupancy::new(self.num_states, self.num_actions, rho)
    }

    /// Outflow `Σ_{a,s'} q(s,a,s')` and inflow `Σ_{s',a} q(s',a,s)` per state.
    pub fn flows(&self) -> (Vec<f64>, Vec<f64>) {
        let ns = self.num_states;
        let mut out = vec![0.0; ns];
        let mut inflow = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..self.num_actions {
                for next in 0..ns {
                    let v = self.get(s, a, next);
                    out[s] += v;
                    inflow[next] += v;
                }
            }
        }
        (out, inflow)
    }
}

/// Parameters of the shrunk polytope `{q ∈ Δ : ρ(s,a) ≥ δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrunkPolytopeSpec {
    pub delta: f64,
    pub num_states: usize,
    pub num_actions: usize,
}

impl ShrunkPolytopeSpec {
    pub fn new(delta: f64, num_states: usize, num_actions: usize) -> Result<Self, OccupancyError> {
        let limit = 1.0 / (num_states * num_actions) as f64;
        if !(delta > 0.0 && delta < limit) {
            return Err(OccupancyError::Delta { delta, limit });
        }
        Ok(Self { delta, num_states, num_actions })
    }

    /// The unshrunk polytope, `δ = 0`.
    pub fn unshrunk(num_states: usize, num_actions: usize) -> Self {
        Self { delta: 0.0, num_states, num_actions }
    }

    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions * self.num_states
    }
}

/// Solves `ν = ν p` with `Σ ν = 1` for a row-major chain by replacing one
/// balance equation with the normalization row.
pub fn stationary_distribution(chain: &[f64], ns: usize) -> Result<Vec<f64>, OccupancyError> {
    let mut m = DMatrix::<f64>::zeros(ns, ns);
    for r in 0..ns {
        for c in 0..ns {
            // Row r of (pᵀ − I).
            m[(r, c)] = chain[c * ns + r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..ns {
        m[(ns - 1, c)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(ns);
    rhs[ns - 1] = 1.0;
    let lu = m.full_piv_lu();
    let u = lu.u();
    let scale = (0..ns).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    let pivot = (0..ns).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if pivot <= SINGULAR_PIVOT * scale.max(1.0) {
        return Err(OccupancyError::NotErgodic { pivot });
    }
    let nu = lu.solve(&rhs).ok_or(OccupancyError::NotErgodic { pivot })?;
    Ok(nu.iter().copied().collect())
}

/// `(ν, ρ, q)` of a policy run on a kernel.
pub fn occupancy_from_policy(
    policy: &StationaryPolicy,
    kernel: &TransitionKernel,
) -> Result<(StateOccupancy, StateActionOccupancy, OccupancyMeasure), OccupancyError> {
    let (ns, na) = (kernel.num_states(), kernel.num_actions());
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(OccupancyError::Shape {
            policy: (policy.num_states(), policy.num_actions()),
            kernel: (ns, na),
        });
    }
    let chain = kernel.induced_chain(policy);
    let nu = stationary_distribution(&chain, ns)?;
    let rho: Vec<f64> = (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| nu[s] * policy.prob(s, a)).collect();
    let rho = StateActionOccupancy::new(ns, na, rho);
    let q = rho.lift(kernel);
    Ok((StateOccupancy { nu }, rho, q))
}

/// Kernel and policy induced by an occupancy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Induced {
    pub kernel: TransitionKernel,
    pub policy: StationaryPolicy,
    /// `(s, a)` pairs with zero mass whose kernel row fell back to uniform.
    pub fallback_pairs: Vec<(usize, usize)>,
    /// States with zero mass whose policy row fell back to uniform.
    pub fallback_states: Vec<usize>,
}

impl Induced {
    pub fn used_fallback(&self) -> bool {
        !self.fallback_pairs.is_empty() || !self.fallback_states.is_empty()
    }
}

/// `P^q(s'|s,a) = q(s,a,s') / ρ(s,a)` and `π^q(a|s) = ρ(s,a) / ν(s)`.
///
/// Entries are clipped at zero before normalizing so that projection
/// round-off cannot produce negative probabilities. Rows with no mass become
/// uniform and are reported.
pub fn induced_kernel_and_policy(q: &OccupancyMeasure) -> Induced {
    let (ns, na) = (q.num_states(), q.num_actions());
    let mut kernel = vec![0.0; q.dim()];
    let mut fallback_pairs = Vec::new();
    let mut weights = vec![0.0; ns * na];
    let mut fallback_states = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            let start = q.index(s, a, 0);
            let row: Vec<f64> = q.q[start..start + ns].iter().map(|v| v.max(0.0)).collect();
            let mass: f64 = row.iter().sum();
            weights[s * na + a] = mass;
            if mass > 0.0 {
                for (next, v) in row.iter().enumerate() {
                    kernel[start + next] = v / mass;
                }
            } else {
                fallback_pairs.push((s, a));
                kernel[start..start + ns].fill(1.0 / ns as f64);
            }
        }
        if weights[s * na..(s + 1) * na].iter().sum::<f64>() <= 0.0 {
            fallback_states.push(s);
        }
    }
    // Normalizing by the row sum keeps each row within a few ulps of one.
    let kernel = TransitionKernel::new(ns, na, kernel).unwrap_or_else(|_| renormalized_kernel(ns, na, &q.q));
    let policy = StationaryPolicy::from_weights(ns, na, &weights);
    Induced { kernel, policy, fallback_pairs, fallback_states }
}

fn renormalized_kernel(ns: usize, na: usize, q: &[f64]) -> TransitionKernel {
    let mut probs = Vec::with_capacity(q.len());
    for row in q.chunks(ns) {
        let clipped: Vec<f64> = row.iter().map(|v| v.max(0.0)).collect();
        let mass: f64 = clipped.iter().sum();
        if mass > 0.0 {
            let mut normalized: Vec<f64> = clipped.iter().map(|v| v / mass).collect();
            let total: f64 = normalized.iter().sum();
            let last = normalized.len() - 1;
            normalized[last] += 1.0 - total;
            probs.extend(normalized);
        } else {
            probs.extend(std::iter::repeat_n(1.0 / ns as f64, ns));
        }
    }
    TransitionKernel::new(ns, na, probs).expect("renormalized rows are stochastic")
}

/// Largest violation of each family of constraints defining
/// `Δ_δ(𝒫)`. All fields are nonnegative; zero means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Membership {
    pub normalization: f64,
    pub flow_balance: f64,
    pub nonnegativity: f64,
    pub floor: f64,
    pub confidence: f64,
}

impl Membership {
    pub fn worst(&self) -> f64 {
        [self.normalization, self.flow_balance, self.nonnegativity, self.floor, self.confidence]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn is_member(&self) -> bool {
        self.worst() <= MEMBERSHIP_TOLERANCE
    }
}

/// Checks `q` against normalization, flow balance, `ρ ≥ δ` and, when given,
/// the linearized confidence constraints
/// `lower(s,a,s') ρ(s,a) ≤ q(s,a,s') ≤ upper(s,a,s') ρ(s,a)`.
pub fn check_membership(
    q: &OccupancyMeasure,
    spec: &ShrunkPolytopeSpec,
    confidence: Option<&ConfidenceState>,
) -> Membership {
    let (ns, na) = (q.num_states(), q.num_actions());
    let total: f64 = q.q.iter().sum();
    let (out, inflow) = q.flows();
    let flow_balance = out.iter().zip(&inflow).map(|(o, i)| (o - i).abs()).fold(0.0, f64::max);
    let nonnegativity = q.q.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let rho = q.state_action();
    let floor = rho.rho.iter().map(|r| (spec.delta - r).max(0.0)).fold(0.0, f64::max);
    let mut confidence_violation: f64 = 0.0;
    if let Some(conf) = confidence {
        for s in 0..ns {
            for a in 0..na {
                let mass = rho.get(s, a);
                for next in 0..ns {
                    let v = q.get(s, a, next);
                    let lo = conf.lower(s, a, next).clamp(0.0, 1.0) * mass;
                    let hi = conf.upper(s, a, next).clamp(0.0, 1.0) * mass;
                    confidence_violation = confidence_violation.max(lo - v).max(v - hi);
                }
            }
        }
    }
    Membership {
        normalization: (total - 1.0).abs(),
        flow_balance,
        nonnegativity,
        floor,
        confidence: confidence_violation.max(0.0),
    }
}
