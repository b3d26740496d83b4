//! Convex machinery over small dense polytopes.
//!
//! * [`solve_lp`]: two-phase revised simplex with Bland's rule.
//! * [`project`]: Euclidean projection by the Goldfarb-Idnani dual
//!   active-set method, falling back to Dykstra's alternating projections.
//! * [`omd_update`]: one mirror-descent step with a quadratic regularizer.

mod dykstra;
mod lp;
mod qp;

pub use dykstra::project_dykstra;
pub use lp::{solve_lp, LpSolution, Sense};
pub use qp::project_active_set;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Constraint satisfaction demanded of every returned point.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
/// Reduced-cost tolerance of the simplex method.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;
pub const MAX_PROJECTION_ITERATIONS: usize = 100_000;
pub const MAX_SIMPLEX_PIVOTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("constraint system is infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("strong convexity modulus must be positive, got {0}")]
    Regularizer(f64),
}

/// `⟨coeffs, x⟩ (= or ≤) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Constraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x)
    }
}

/// Equalities `⟨a, x⟩ = b` and inequalities `⟨a, x⟩ ≤ b` over `R^dim`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearConstraintSystem {
    dim: usize,
    equalities: Vec<Constraint>,
    inequalities: Vec<Constraint>,
}

impl LinearConstraintSystem {
    pub fn new(dim: usize) -> Self {
        Self { dim, equalities: Vec::new(), inequalities: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn equalities(&self) -> &[Constraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Constraint] {
        &self.inequalities
    }

    pub fn add_equality(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.dim, "equality dimension");
        self.equalities.push(Constraint { coeffs, rhs });
        self
    }

    /// Adds `⟨coeffs, x⟩ ≤ rhs`.
    pub fn add_inequality(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.dim, "inequality dimension");
        self.inequalities.push(Constraint { coeffs, rhs });
        self
    }

    /// Largest violation over all constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.equalities.iter().map(|c| (c.value(x) - c.rhs).abs());
        let ineq = self.inequalities.iter().map(|c| (c.value(x) - c.rhs).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }

    pub fn is_feasible_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.max_violation(x) <= FEASIBILITY_TOLERANCE
    }

    /// Runs a phase-one simplex solve and returns a feasible vertex.
    pub fn feasible_point(&self) -> Result<Vec<f64>, ConvexError> {
        lp::phase_one_point(self)
    }

    /// Fails with [`ConvexError::Infeasible`] when the polytope is empty.
    pub fn ensure_feasible(&self) -> Result<(), ConvexError> {
        self.feasible_point().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    /// `h(x) = (μ/2) ‖x‖²`.
    Quadratic { mu: f64 },
}

impl RegularizerSpec {
    pub fn quadratic() -> Self {
        RegularizerSpec::Quadratic { mu: 1.0 }
    }

    pub fn modulus(&self) -> f64 {
        match *self {
            RegularizerSpec::Quadratic { mu } => mu,
        }
    }

    fn validate(&self) -> Result<(), ConvexError> {
        let mu = self.modulus();
        if mu > 0.0 && mu.is_finite() {
            Ok(())
        } else {
            Err(ConvexError::Regularizer(mu))
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.modulus() * dot(x, x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.modulus() * v).collect()
    }
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self::quadratic()
    }
}

/// `D_h(p‖q) = h(p) − h(q) − ⟨∇h(q), p − q⟩`.
pub fn bregman(reg: &RegularizerSpec, p: &[f64], q: &[f64]) -> f64 {
    match *reg {
        RegularizerSpec::Quadratic { mu } => {
            0.5 * mu * p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
    }
}

/// Which algorithm produced a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionMethod {
    ActiveSet,
    Dykstra,
}

/// Euclidean projection of `point` onto the polytope.
///
/// The active-set solve is exact up to round-off; if it fails numerically or
/// leaves a residual above [`FEASIBILITY_TOLERANCE`], Dykstra's method is run
/// from scratch and its answer is returned when it meets the tolerance.
pub fn project(point: &[f64], system: &LinearConstraintSystem) -> Result<(Vec<f64>, ProjectionMethod), ConvexError> {
    if point.len() != system.dim() {
        return Err(ConvexError::Dimension { expected: system.dim(), found: point.len() });
    }
    let primary = project_active_set(point, system);
    match primary {
        Ok(x) if system.max_violation(&x) <= FEASIBILITY_TOLERANCE => Ok((x, ProjectionMethod::ActiveSet)),
        Err(ConvexError::Infeasible { residual }) => {
            // Confirm with an exact phase-one solve before reporting.
            match system.feasible_point() {
                Err(e) => Err(e),
                Ok(_) => dykstra_or(point, system, ConvexError::Infeasible { residual }),
            }
        }
        Ok(x) => {
            let residual = system.max_violation(&x);
            dykstra_or(point, system, ConvexError::NoConvergence { what: "active-set projection", iterations: 0, residual })
        }
        Err(e) => dykstra_or(point, system, e),
    }
}

fn dykstra_or(
    point: &[f64],
    system: &LinearConstraintSystem,
    original: ConvexError,
) -> Result<(Vec<f64>, ProjectionMethod), ConvexError> {
    match project_dykstra(point, system, MAX_PROJECTION_ITERATIONS, 1e-13) {
        Ok(x) if system.max_violation(&x) <= FEASIBILITY_TOLERANCE => Ok((x, ProjectionMethod::Dykstra)),
        _ => Err(original),
    }
}

/// `argmax_{x ∈ polytope} η⟨x, g⟩ − D_h(x‖current)`.
///
/// For `h = (μ/2)‖·‖²` this is the projection of `current + (η/μ) g`.
pub fn omd_update(
    current: &[f64],
    gradient_payoff: &[f64],
    eta: f64,
    constraints: &LinearConstraintSystem,
    reg: &RegularizerSpec,
) -> Result<Vec<f64>, ConvexError> {
    reg.validate()?;
    if current.len() != constraints.dim() {
        return Err(ConvexError::Dimension { expected: constraints.dim(), found: current.len() });
    }
    if gradient_payoff.len() != current.len() {
        return Err(ConvexError::Dimension { expected: current.len(), found: gradient_payoff.len() });
    }
    let scale = eta / reg.modulus();
    let target: Vec<f64> = current.iter().zip(gradient_payoff).map(|(c, g)| c + scale * g).collect();
    project(&target, constraints).map(|(x, _)| x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
