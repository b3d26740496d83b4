//! Dykstra's alternating projections over hyperplanes and halfspaces.
//!
//! Slow but simple; used as the fallback and cross-check for the active-set
//! solver.

use super::{dot, ConvexError, LinearConstraintSystem, FEASIBILITY_TOLERANCE};

/// Projects `point` by cycling over every constraint with Dykstra
/// corrections. Stops once a full sweep moves the iterate by at most `tol`
/// and the result is feasible.
pub fn project_dykstra(
    point: &[f64],
    system: &LinearConstraintSystem,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<f64>, ConvexError> {
    let n = system.dim();
    if point.len() != n {
        return Err(ConvexError::Dimension { expected: n, found: point.len() });
    }
    // (normal, rhs, is_equality, ‖normal‖²)
    let sets: Vec<(&[f64], f64, bool, f64)> = system
        .equalities()
        .iter()
        .map(|c| (c.coeffs.as_slice(), c.rhs, true))
        .chain(system.inequalities().iter().map(|c| (c.coeffs.as_slice(), c.rhs, false)))
        .map(|(a, b, eq)| (a, b, eq, dot(a, a)))
        .filter(|&(_, b, _, nn)| {
            // Zero rows are trivially satisfied or trivially infeasible; the
            // latter is caught by the final feasibility check.
            nn > 0.0 || b.abs() > 0.0
        })
        .collect();
    let mut x = point.to_vec();
    let mut corrections = vec![vec![0.0; n]; sets.len()];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for _ in 0..max_iter {
        let mut moved = 0.0f64;
        for (set, corr) in sets.iter().zip(corrections.iter_mut()) {
            let (a, b, equality, nn) = *set;
            for i in 0..n {
                y[i] = x[i] + corr[i];
            }
            let excess = dot(a, &y) - b;
            let scale = if nn == 0.0 {
                0.0
            } else if equality || excess > 0.0 {
                excess / nn
            } else {
                0.0
            };
            for i in 0..n {
                let next = y[i] - scale * a[i];
                corr[i] = y[i] - next;
                moved = moved.max((next - x[i]).abs());
                x[i] = next;
            }
        }
        residual = system.max_violation(&x);
        if moved <= tol && residual <= FEASIBILITY_TOLERANCE {
            return Ok(x);
        }
    }
    Err(ConvexError::NoConvergence { what: "Dykstra projection", iterations: max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let mut sys = LinearConstraintSystem::new(3);
        sys.add_equality(vec![1.0; 3], 1.0);
        for i in 0..3 {
            let mut row = vec![0.0; 3];
            row[i] = -1.0;
            sys.add_inequality(row, 0.0);
        }
        // Sorting-based closed form: (0.9, 0.4, -0.5) → (0.75, 0.25, 0).
        let x = project_dykstra(&[0.9, 0.4, -0.5], &sys, 100_000, 1e-14).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-9 && (x[1] - 0.25).abs() < 1e-9 && x[2].abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn agrees_with_active_set() {
        let mut sys = LinearConstraintSystem::new(2);
        sys.add_inequality(vec![1.0, 1.0], 1.0);
        sys.add_inequality(vec![-1.0, 0.0], 0.0);
        sys.add_inequality(vec![0.0, -1.0], 0.0);
        sys.add_inequality(vec![1.0, -1.0], 0.2);
        let a = super::super::project_active_set(&[3.0, -1.0], &sys).unwrap();
        let b = project_dykstra(&[3.0, -1.0], &sys, 100_000, 1e-14).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
    }
}
