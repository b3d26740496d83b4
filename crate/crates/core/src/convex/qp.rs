//! Euclidean projection onto a polytope by the Goldfarb-Idnani dual method.
//!
//! The problem `min ½‖x − y‖²` has identity Hessian, so the method starts at
//! the unconstrained minimizer `y` with `J = I` and no active constraints,
//! then repeatedly adds the most violated constraint, dropping active ones
//! whose multipliers would turn negative. `J` and the upper-triangular `R`
//! satisfy `Jᵀ N = [R; 0]` for the matrix `N` of active normals and are
//! updated with Givens rotations.
//!
//! Equalities are orthonormalized first; dependent rows are dropped, and an
//! inconsistent dependent row is reported as infeasible.

use super::{dot, ConvexError, LinearConstraintSystem, MAX_PROJECTION_ITERATIONS};

/// Constraints violated by less than this (rows have unit norm) are treated
/// as satisfied.
const VIOLATION_TOLERANCE: f64 = 1e-12;
/// Primal step directions shorter than this are treated as zero.
const DIRECTION_TOLERANCE: f64 = 1e-12;
const DEPENDENCE_TOLERANCE: f64 = 1e-10;

/// A `⟨n, x⟩ ≥ b` row with unit `n`.
struct Row {
    normal: Vec<f64>,
    rhs: f64,
    equality: bool,
}

/// Normalized rows in `≥` form: orthonormal equalities first, then
/// inequalities. Rows with a zero normal are checked and dropped.
fn prepare(system: &LinearConstraintSystem) -> Result<Vec<Row>, ConvexError> {
    let mut rows: Vec<Row> = Vec::new();
    for c in system.equalities() {
        let mut normal = c.coeffs.clone();
        let mut rhs = c.rhs;
        for basis in rows.iter() {
            let coef = dot(&normal, &basis.normal);
            for (v, e) in normal.iter_mut().zip(&basis.normal) {
                *v -= coef * e;
            }
            rhs -= coef * basis.rhs;
        }
        let len = dot(&normal, &normal).sqrt();
        let scale = dot(&c.coeffs, &c.coeffs).sqrt().max(1.0);
        if len <= DEPENDENCE_TOLERANCE * scale {
            if rhs.abs() > 1e-9 * scale {
                return Err(ConvexError::Infeasible { residual: rhs.abs() });
            }
            continue;
        }
        normal.iter_mut().for_each(|v| *v /= len);
        rows.push(Row { normal, rhs: rhs / len, equality: true });
    }
    for c in system.inequalities() {
        let len = dot(&c.coeffs, &c.coeffs).sqrt();
        if len == 0.0 {
            if c.rhs < -1e-9 {
                return Err(ConvexError::Infeasible { residual: -c.rhs });
            }
            continue;
        }
        rows.push(Row { normal: c.coeffs.iter().map(|v| -v / len).collect(), rhs: -c.rhs / len, equality: false });
    }
    Ok(rows)
}

struct Factor {
    n: usize,
    /// Column-major `n × n`: `j[col][row]`.
    j: Vec<Vec<f64>>,
    /// Column-major upper triangle: `r[col][row]` for `row ≤ col`.
    r: Vec<Vec<f64>>,
    active: usize,
}

impl Factor {
    fn new(n: usize) -> Self {
        let j = (0..n)
            .map(|c| {
                let mut col = vec![0.0; n];
                col[c] = 1.0;
                col
            })
            .collect();
        Self { n, j, r: Vec::new(), active: 0 }
    }

    /// `d = Jᵀ normal`.
    fn project(&self, normal: &[f64]) -> Vec<f64> {
        self.j.iter().map(|col| dot(col, normal)).collect()
    }

    /// Primal direction `z = Σ_{k ≥ q} d_k J_k`.
    fn direction(&self, d: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        for k in self.active..self.n {
            if d[k] != 0.0 {
                for (zi, ji) in z.iter_mut().zip(&self.j[k]) {
                    *zi += d[k] * ji;
                }
            }
        }
        z
    }

    /// Dual direction `r = R⁻¹ d[..q]` by back substitution.
    fn dual_direction(&self, d: &[f64]) -> Vec<f64> {
        let q = self.active;
        let mut out = vec![0.0; q];
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in (i + 1)..q {
                acc -= self.r[k][i] * out[k];
            }
            out[i] = acc / self.r[i][i];
        }
        out
    }

    fn rotate_columns(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let (left, right) = self.j.split_at_mut(b);
        let ja = &mut left[a];
        let jb = &mut right[0];
        for (x, y) in ja.iter_mut().zip(jb.iter_mut()) {
            let (u, v) = (*x, *y);
            *x = c * u + s * v;
            *y = -s * u + c * v;
        }
    }

    /// Appends a constraint whose projected normal is `d`.
    fn add(&mut self, mut d: Vec<f64>) {
        let q = self.active;
        for k in ((q + 1)..self.n).rev() {
            if d[k] == 0.0 {
                continue;
            }
            let h = d[k - 1].hypot(d[k]);
            let (c, s) = (d[k - 1] / h, d[k] / h);
            d[k - 1] = h;
            d[k] = 0.0;
            self.rotate_columns(k - 1, k, c, s);
        }
        self.r.push(d[..=q].to_vec());
        self.active += 1;
    }

    /// Removes the active constraint at position `pos`, restoring the
    /// triangular shape of `R`.
    fn drop(&mut self, pos: usize) {
        self.r.remove(pos);
        let q = self.active - 1;
        for k in pos..q {
            // Column k now has a subdiagonal entry at row k + 1.
            let a = self.r[k][k];
            let b = self.r[k][k + 1];
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            for col in self.r.iter_mut().skip(k) {
                let (u, v) = (col[k], col[k + 1]);
                col[k] = c * u + s * v;
                col[k + 1] = -s * u + c * v;
            }
            self.r[k].truncate(k + 1);
            self.rotate_columns(k, k + 1, c, s);
        }
        // Trailing columns kept one row too many only at positions ≥ pos.
        for (k, col) in self.r.iter_mut().enumerate() {
            col.truncate(k + 1);
        }
        self.active = q;
    }
}

/// Exact Euclidean projection of `point` onto the polytope.
pub fn project_active_set(point: &[f64], system: &LinearConstraintSystem) -> Result<Vec<f64>, ConvexError> {
    let n = system.dim();
    if point.len() != n {
        return Err(ConvexError::Dimension { expected: n, found: point.len() });
    }
    let rows = prepare(system)?;
    let mut x = point.to_vec();
    let mut factor = Factor::new(n);
    let mut active: Vec<usize> = Vec::new();
    let mut multipliers: Vec<f64> = Vec::new();
    let mut is_active = vec![false; rows.len()];
    let num_eq = rows.iter().filter(|r| r.equality).count();
    let mut next_equality = 0;
    let mut iterations = 0usize;

    loop {
        // Pick the constraint to add.
        let (p, sign) = if next_equality < num_eq {
            let p = next_equality;
            next_equality += 1;
            let slack = dot(&rows[p].normal, &x) - rows[p].rhs;
            (p, if slack > 0.0 { -1.0 } else { 1.0 })
        } else {
            let mut worst: Option<(usize, f64)> = None;
            for (i, row) in rows.iter().enumerate().skip(num_eq) {
                if is_active[i] {
                    continue;
                }
                let slack = dot(&row.normal, &x) - row.rhs;
                if slack < -VIOLATION_TOLERANCE && worst.is_none_or(|(_, w)| slack < w) {
                    worst = Some((i, slack));
                }
            }
            match worst {
                None => return Ok(x),
                Some((i, _)) => (i, 1.0),
            }
        };
        let normal: Vec<f64> = rows[p].normal.iter().map(|v| sign * v).collect();
        let rhs = sign * rows[p].rhs;
        let mut slack = dot(&normal, &x) - rhs;
        let mut added_multiplier = 0.0;

        loop {
            iterations += 1;
            if iterations > MAX_PROJECTION_ITERATIONS {
                return Err(ConvexError::NoConvergence {
                    what: "active-set projection",
                    iterations,
                    residual: -slack,
                });
            }
            let d = factor.project(&normal);
            let z = factor.direction(&d);
            let r = factor.dual_direction(&d);

            let mut partial: Option<(usize, f64)> = None;
            for (k, (&rk, &c)) in r.iter().zip(&active).enumerate() {
                if rows[c].equality || rk <= 0.0 {
                    continue;
                }
                let ratio = multipliers[k] / rk;
                if partial.is_none_or(|(_, t)| ratio < t) {
                    partial = Some((k, ratio));
                }
            }
            let znorm = dot(&z, &z).sqrt();
            let full = if znorm > DIRECTION_TOLERANCE { Some(-slack / dot(&z, &normal)) } else { None };

            match (full, partial) {
                (None, None) => {
                    return Err(ConvexError::Infeasible { residual: -slack });
                }
                (None, Some((k, t))) => {
                    // Step in dual space only.
                    for (u, rk) in multipliers.iter_mut().zip(&r) {
                        *u -= t * rk;
                    }
                    added_multiplier += t;
                    drop_active(&mut factor, &mut active, &mut multipliers, &mut is_active, k);
                }
                (Some(t2), partial) => {
                    let (t, drop_at) = match partial {
                        Some((k, t1)) if t1 < t2 => (t1, Some(k)),
                        _ => (t2, None),
                    };
                    for (xi, zi) in x.iter_mut().zip(&z) {
                        *xi += t * zi;
                    }
                    for (u, rk) in multipliers.iter_mut().zip(&r) {
                        *u -= t * rk;
                    }
                    added_multiplier += t;
                    match drop_at {
                        None => {
                            factor.add(d);
                            active.push(p);
                            multipliers.push(added_multiplier);
                            is_active[p] = true;
                            break;
                        }
                        Some(k) => {
                            drop_active(&mut factor, &mut active, &mut multipliers, &mut is_active, k);
                            slack = dot(&normal, &x) - rhs;
                        }
                    }
                }
            }
        }
    }
}

fn drop_active(
    factor: &mut Factor,
    active: &mut Vec<usize>,
    multipliers: &mut Vec<f64>,
    is_active: &mut [bool],
    pos: usize,
) {
    factor.drop(pos);
    is_active[active[pos]] = false;
    active.remove(pos);
    multipliers.remove(pos);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_projection() {
        // [0,1]^3 box.
        let mut sys = LinearConstraintSystem::new(3);
        for i in 0..3 {
            let mut up = vec![0.0; 3];
            up[i] = 1.0;
            sys.add_inequality(up.clone(), 1.0);
            up[i] = -1.0;
            sys.add_inequality(up, 0.0);
        }
        let x = project_active_set(&[1.5, -0.2, 0.4], &sys).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && x[1].abs() < 1e-14 && (x[2] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn needs_a_drop() {
        // Project (2, 2) onto {x + y ≤ 1, x ≥ 0, y ≥ 0, x − y ≤ 0.2}.
        let mut sys = LinearConstraintSystem::new(2);
        sys.add_inequality(vec![1.0, 1.0], 1.0);
        sys.add_inequality(vec![-1.0, 0.0], 0.0);
        sys.add_inequality(vec![0.0, -1.0], 0.0);
        sys.add_inequality(vec![1.0, -1.0], 0.2);
        let x = project_active_set(&[3.0, -1.0], &sys).unwrap();
        // Closest point lies on the vertex of x + y = 1 and x − y = 0.2.
        assert!((x[0] - 0.6).abs() < 1e-12 && (x[1] - 0.4).abs() < 1e-12, "{x:?}");
    }

    #[test]
    fn dependent_equalities() {
        let mut sys = LinearConstraintSystem::new(3);
        sys.add_equality(vec![1.0, 1.0, 1.0], 1.0);
        sys.add_equality(vec![1.0, -1.0, 0.0], 0.0);
        sys.add_equality(vec![2.0, 0.0, 1.0], 1.0);
        let x = project_active_set(&[0.0, 0.0, 0.0], &sys).unwrap();
        assert!(sys.max_violation(&x) < 1e-12);

        sys.add_equality(vec![0.0, 2.0, 1.0], 5.0);
        assert!(matches!(project_active_set(&[0.0; 3], &sys), Err(ConvexError::Infeasible { .. })));
    }
}
