//! Dense two-phase revised simplex.
//!
//! The input system has free variables; each is split as `x = x⁺ − x⁻` and
//! each inequality gets a slack, giving the standard form `A z = b, z ≥ 0`
//! with `b ≥ 0` after row sign flips. The basis inverse is kept explicitly,
//! updated by elementary row operations and refactored periodically. Both
//! entering and leaving choices follow Bland's smallest-index rule, so the
//! method cannot cycle and its output vertex is a deterministic function of
//! the input.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ConvexError, LinearConstraintSystem, MAX_SIMPLEX_PIVOTS, OPTIMALITY_TOLERANCE};

const PIVOT_TOLERANCE: f64 = 1e-11;
const PHASE_ONE_TOLERANCE: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub point: Vec<f64>,
    pub value: f64,
    /// Multipliers of the equalities, in input order.
    pub equality_duals: Vec<f64>,
    /// Multipliers of the inequalities, in input order; nonnegative for a
    /// maximization.
    pub inequality_duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    /// `Σ b_eq y_eq + Σ b_in y_in`, equal to `value` at optimality.
    pub fn dual_value(&self, system: &LinearConstraintSystem) -> f64 {
        let eq: f64 = system.equalities().iter().zip(&self.equality_duals).map(|(c, y)| c.rhs * y).sum();
        let ineq: f64 = system.inequalities().iter().zip(&self.inequality_duals).map(|(c, y)| c.rhs * y).sum();
        eq + ineq
    }
}

struct StandardForm {
    /// Column-major dense matrix: `cols[j][r]`.
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// +1 or −1 applied to each row to make `b ≥ 0`.
    row_sign: Vec<f64>,
    num_structural: usize,
    /// First artificial column index; columns from here on are artificial.
    first_artificial: usize,
    initial_basis: Vec<usize>,
}

impl StandardForm {
    fn build(system: &LinearConstraintSystem) -> Self {
        let n = system.dim();
        let rows: Vec<(&[f64], f64, bool)> = system
            .equalities()
            .iter()
            .map(|c| (c.coeffs.as_slice(), c.rhs, false))
            .chain(system.inequalities().iter().map(|c| (c.coeffs.as_slice(), c.rhs, true)))
            .collect();
        let m = rows.len();
        let num_slack = system.inequalities().len();
        let num_structural = 2 * n + num_slack;

        let mut cols = vec![vec![0.0; m]; num_structural];
        let mut b = vec![0.0; m];
        let mut row_sign = vec![1.0; m];
        let mut basis = vec![usize::MAX; m];
        let mut slack = 2 * n;
        for (r, &(coeffs, rhs, is_ineq)) in rows.iter().enumerate() {
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[r] = sign;
            b[r] = sign * rhs;
            for j in 0..n {
                cols[2 * j][r] = sign * coeffs[j];
                cols[2 * j + 1][r] = -sign * coeffs[j];
            }
            if is_ineq {
                cols[slack][r] = sign;
                if sign > 0.0 {
                    basis[r] = slack;
                }
                slack += 1;
            }
        }
        let first_artificial = num_structural;
        for r in 0..m {
            if basis[r] == usize::MAX {
                let mut col = vec![0.0; m];
                col[r] = 1.0;
                basis[r] = cols.len();
                cols.push(col);
            }
        }
        Self { cols, b, row_sign, num_structural, first_artificial, initial_basis: basis }
    }

    fn rows(&self) -> usize {
        self.b.len()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.first_artificial
    }
}

struct Simplex<'a> {
    form: &'a StandardForm,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: DMatrix<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn new(form: &'a StandardForm) -> Self {
        let m = form.rows();
        let mut in_basis = vec![false; form.cols.len()];
        for &j in &form.initial_basis {
            in_basis[j] = true;
        }
        let mut s = Self {
            form,
            basis: form.initial_basis.clone(),
            in_basis,
            binv: DMatrix::identity(m, m),
            xb: form.b.clone(),
            pivots: 0,
            since_refactor: 0,
        };
        s.refactor();
        s
    }

    fn refactor(&mut self) {
        let m = self.form.rows();
        if m == 0 {
            return;
        }
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (r, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[(i, r)] = self.form.cols[j][i];
            }
        }
        if let Some(inv) = bmat.try_inverse() {
            self.binv = inv;
            for i in 0..m {
                self.xb[i] = (0..m).map(|k| self.binv[(i, k)] * self.form.b[k]).sum();
            }
        }
        self.since_refactor = 0;
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.form.rows();
        let col = &self.form.cols[j];
        (0..m).map(|i| (0..m).map(|k| self.binv[(i, k)] * col[k]).sum()).collect()
    }

    /// `y = B⁻ᵀ c_B`.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.form.rows();
        (0..m).map(|k| (0..m).map(|i| cost[self.basis[i]] * self.binv[(i, k)]).sum()).collect()
    }

    fn pivot(&mut self, row: usize, entering: usize, direction: &[f64]) {
        let m = self.form.rows();
        let theta = self.xb[row] / direction[row];
        for i in 0..m {
            if i != row {
                self.xb[i] -= theta * direction[i];
            }
        }
        self.xb[row] = theta;
        let piv = direction[row];
        for k in 0..m {
            self.binv[(row, k)] /= piv;
        }
        for i in 0..m {
            if i != row && direction[i] != 0.0 {
                let f = direction[i];
                for k in 0..m {
                    let v = self.binv[(row, k)];
                    self.binv[(i, k)] -= f * v;
                }
            }
        }
        self.in_basis[self.basis[row]] = false;
        self.basis[row] = entering;
        self.in_basis[entering] = true;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Maximizes `cost · z` with artificial columns barred from entering when
    /// `allow_artificial` is false.
    fn optimize(&mut self, cost: &[f64], allow_artificial: bool) -> Result<Outcome, ConvexError> {
        loop {
            if self.pivots >= MAX_SIMPLEX_PIVOTS {
                return Err(ConvexError::NoConvergence {
                    what: "simplex",
                    iterations: self.pivots,
                    residual: f64::NAN,
                });
            }
            let y = self.duals(cost);
            let entering = (0..self.form.cols.len()).find(|&j| {
                if self.in_basis[j] || (!allow_artificial && self.form.is_artificial(j)) {
                    return false;
                }
                let reduced = cost[j] - self.form.cols[j].iter().zip(&y).map(|(a, y)| a * y).sum::<f64>();
                reduced > OPTIMALITY_TOLERANCE
            });
            let Some(entering) = entering else {
                return Ok(Outcome::Optimal);
            };
            let direction = self.ftran(entering);
            let mut leave: Option<(usize, f64)> = None;
            for (i, &d) in direction.iter().enumerate() {
                if d > PIVOT_TOLERANCE {
                    let ratio = self.xb[i].max(0.0) / d;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(Outcome::Unbounded),
                Some((row, _)) => self.pivot(row, entering, &direction),
            }
        }
    }

    fn artificial_sum(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| self.form.is_artificial(j))
            .map(|(_, &v)| v.max(0.0))
            .sum()
    }

    /// Replaces basic artificials at level zero by structural columns where
    /// the row allows it. Rows where no structural column has a nonzero
    /// entry are redundant; their artificial stays basic at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.form.rows();
        for row in 0..m {
            if !self.form.is_artificial(self.basis[row]) {
                continue;
            }
            let candidate = (0..self.form.num_structural).find_map(|j| {
                if self.in_basis[j] {
                    return None;
                }
                let col = &self.form.cols[j];
                let v: f64 = (0..m).map(|k| self.binv[(row, k)] * col[k]).sum();
                (v.abs() > 1e-9).then_some(j)
            });
            if let Some(j) = candidate {
                let direction = self.ftran(j);
                self.pivot(row, j, &direction);
            }
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.form.cols.len()];
        for (&j, &v) in self.basis.iter().zip(&self.xb) {
            z[j] = v;
        }
        z
    }
}

fn phase_one<'a>(form: &'a StandardForm) -> Result<Simplex<'a>, ConvexError> {
    let mut simplex = Simplex::new(form);
    let cost: Vec<f64> = (0..form.cols.len()).map(|j| if form.is_artificial(j) { -1.0 } else { 0.0 }).collect();
    if form.cols.len() > form.first_artificial {
        simplex.optimize(&cost, true)?;
    }
    let residual = simplex.artificial_sum();
    if residual > PHASE_ONE_TOLERANCE {
        return Err(ConvexError::Infeasible { residual });
    }
    simplex.drive_out_artificials();
    Ok(simplex)
}

fn recover_point(form: &StandardForm, z: &[f64], n: usize) -> Vec<f64> {
    let _ = form;
    (0..n).map(|j| z[2 * j] - z[2 * j + 1]).collect()
}

pub(super) fn phase_one_point(system: &LinearConstraintSystem) -> Result<Vec<f64>, ConvexError> {
    let form = StandardForm::build(system);
    let simplex = phase_one(&form)?;
    Ok(recover_point(&form, &simplex.structural_values(), system.dim()))
}

/// Optimizes `⟨objective, x⟩` over the polytope. The returned point is a
/// basic feasible solution, hence a vertex when the polytope is bounded.
pub fn solve_lp(objective: &[f64], system: &LinearConstraintSystem, sense: Sense) -> Result<LpSolution, ConvexError> {
    let n = system.dim();
    if objective.len() != n {
        return Err(ConvexError::Dimension { expected: n, found: objective.len() });
    }
    let sign = match sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let form = StandardForm::build(system);
    let mut simplex = phase_one(&form)?;
    let mut cost = vec![0.0; form.cols.len()];
    for j in 0..n {
        cost[2 * j] = sign * objective[j];
        cost[2 * j + 1] = -sign * objective[j];
    }
    match simplex.optimize(&cost, false)? {
        Outcome::Unbounded => return Err(ConvexError::Unbounded),
        Outcome::Optimal => {}
    }
    simplex.refactor();
    let z = simplex.structural_values();
    let point = recover_point(&form, &z, n);
    let value = objective.iter().zip(&point).map(|(c, x)| c * x).sum();
    let y = simplex.duals(&cost);
    let neq = system.equalities().len();
    let duals: Vec<f64> = y.iter().zip(&form.row_sign).map(|(y, s)| sign * y * s).collect();
    Ok(LpSolution {
        point,
        value,
        equality_duals: duals[..neq].to_vec(),
        inequality_duals: duals[neq..].to_vec(),
        pivots: simplex.pivots,
    })
}
