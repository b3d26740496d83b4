//! LP and projection answers checked against brute-force enumeration.

mod common;

use nalgebra::{DMatrix, DVector};
use occunash::convex::{project, solve_lp, ConvexError, LinearConstraintSystem, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every `(coeffs, rhs)` row, equalities first.
fn rows(system: &LinearConstraintSystem) -> (usize, Vec<(Vec<f64>, f64)>) {
    let eq = system.equalities().len();
    let all = system
        .equalities()
        .iter()
        .chain(system.inequalities())
        .map(|c| (c.coeffs.clone(), c.rhs))
        .collect();
    (eq, all)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// All vertices: points where the equalities plus `dim − #eq` linearly
/// independent inequalities are tight, and every constraint holds.
fn vertices(system: &LinearConstraintSystem) -> Vec<Vec<f64>> {
    let d = system.dim();
    let (eq, all) = rows(system);
    let ineq = all.len() - eq;
    let mut out = Vec::new();
    if d < eq {
        return out;
    }
    for chosen in subsets(ineq, d - eq) {
        let tight: Vec<&(Vec<f64>, f64)> = all[..eq].iter().chain(chosen.iter().map(|&j| &all[eq + j])).collect();
        let a = DMatrix::from_fn(d, d, |r, c| tight[r].0[c]);
        let b = DVector::from_iterator(d, tight.iter().map(|t| t.1));
        let lu = a.full_piv_lu();
        if !lu.is_invertible() || lu.determinant().abs() < 1e-10 {
            continue;
        }
        let x = lu.solve(&b).unwrap();
        let x: Vec<f64> = x.iter().copied().collect();
        if system.max_violation(&x) <= 1e-9 {
            out.push(x);
        }
    }
    out
}

/// A bounded random polytope inside `[0, 1]^dim`.
fn random_polytope(rng: &mut ChaCha8Rng, dim: usize, extra: usize, with_equality: bool) -> LinearConstraintSystem {
    let mut sys = LinearConstraintSystem::new(dim);
    for i in 0..dim {
        let mut lo = vec![0.0; dim];
        lo[i] = -1.0;
        sys.add_inequality(lo, 0.0);
        let mut hi = vec![0.0; dim];
        hi[i] = 1.0;
        sys.add_inequality(hi, 1.0);
    }
    for _ in 0..extra {
        let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-0.2..1.0);
        sys.add_inequality(a, b);
    }
    if with_equality {
        let a: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..1.0)).collect();
        let b = rng.random_range(0.1..1.0) * a.iter().sum::<f64>();
        sys.add_equality(a, b);
    }
    sys
}

#[test]
fn simplex_lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut solved, mut empty) = (0, 0);
    for t in 0..300 {
        let dim = rng.random_range(2..=4);
        let extra = rng.random_range(0..=3);
        let sys = random_polytope(&mut rng, dim, extra, t % 3 == 0);
        let objective: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let verts = vertices(&sys);
        let sense = if t % 2 == 0 { Sense::Maximize } else { Sense::Minimize };
        match solve_lp(&objective, &sys, sense) {
            Ok(sol) => {
                let values = verts.iter().map(|v| v.iter().zip(&objective).map(|(x, c)| x * c).sum::<f64>());
                let best = match sense {
                    Sense::Maximize => values.fold(f64::NEG_INFINITY, f64::max),
                    Sense::Minimize => values.fold(f64::INFINITY, f64::min),
                };
                assert!((sol.value - best).abs() <= 1e-9, "trial {t}: lp {} vs vertices {best}", sol.value);
                assert!(sys.max_violation(&sol.point) <= 1e-9);
                solved += 1;
            }
            Err(ConvexError::Infeasible { .. }) => {
                assert!(verts.is_empty(), "trial {t}: LP says infeasible but a vertex exists");
                empty += 1;
            }
            Err(e) => panic!("trial {t}: {e}"),
        }
    }
    assert!(solved > 200, "{solved} solved, {empty} empty");
}

/// Exact Euclidean projection by trying every active set: the answer is the
/// closest feasible point among the equality-constrained projections.
fn brute_force_projection(y: &[f64], system: &LinearConstraintSystem) -> Vec<f64> {
    let d = system.dim();
    let (eq, all) = rows(system);
    let ineq = all.len() - eq;
    let yv = DVector::from_column_slice(y);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << ineq) {
        let active: Vec<&(Vec<f64>, f64)> =
            all[..eq].iter().chain((0..ineq).filter(|j| mask >> j & 1 == 1).map(|j| &all[eq + j])).collect();
        if active.len() > d {
            continue;
        }
        let x = if active.is_empty() {
            yv.clone()
        } else {
            let a = DMatrix::from_fn(active.len(), d, |r, c| active[r].0[c]);
            let b = DVector::from_iterator(active.len(), active.iter().map(|t| t.1));
            let Ok(pinv) = (&a * a.transpose()).pseudo_inverse(1e-12) else { continue };
            &yv - a.transpose() * (pinv * (&a * &yv - b))
        };
        let x: Vec<f64> = x.iter().copied().collect();
        if system.max_violation(&x) > 1e-10 {
            continue;
        }
        let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d0, _)| dist < *d0) {
            best = Some((dist, x));
        }
    }
    best.expect("polytope is nonempty").1
}

#[test]
fn projection_matches_active_set_enumeration_in_six_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut done = 0;
    while done < 60 {
        // Probability simplex in R^6 cut by two random halfspaces.
        let dim = 6;
        let mut sys = LinearConstraintSystem::new(dim);
        sys.add_equality(vec![1.0; dim], 1.0);
        for i in 0..dim {
            let mut row = vec![0.0; dim];
            row[i] = -1.0;
            sys.add_inequality(row, 0.0);
        }
        for _ in 0..2 {
            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            sys.add_inequality(a, rng.random_range(0.0..0.5));
        }
        if sys.feasible_point().is_err() {
            continue;
        }
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.5)).collect();
        let (x, _) = project(&y, &sys).unwrap();
        let oracle = brute_force_projection(&y, &sys);
        let err = common::max_abs_diff(&x, &oracle);
        assert!(err <= 1e-8, "instance {done}: {x:?} vs {oracle:?}");
        done += 1;
    }
}

fn polytope_strategy() -> impl Strategy<Value = (LinearConstraintSystem, Vec<f64>)> {
    (2usize..=5, 0usize..=3, any::<bool>(), any::<u64>()).prop_map(|(dim, extra, eq, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sys = random_polytope(&mut rng, dim, extra, eq);
        // Keep the centre of the cube feasible so the polytope is nonempty.
        let centre = vec![0.5; dim];
        let mut fixed = LinearConstraintSystem::new(dim);
        for c in sys.equalities() {
            fixed.add_equality(c.coeffs.clone(), c.value(&centre));
        }
        for c in sys.inequalities() {
            fixed.add_inequality(c.coeffs.clone(), c.rhs.max(c.value(&centre)));
        }
        sys = fixed;
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..3.0)).collect();
        (sys, y)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_satisfies_variational_inequality((sys, y) in polytope_strategy()) {
        let (x, _) = project(&y, &sys).unwrap();
        prop_assert!(sys.max_violation(&x) <= 1e-9);
        let dir: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let at_x: f64 = dir.iter().zip(&x).map(|(a, b)| a * b).sum();
        for v in vertices(&sys) {
            let at_v: f64 = dir.iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!(at_v - at_x >= -1e-7, "⟨x − y, v − x⟩ = {}", at_v - at_x);
        }
    }

    #[test]
    fn projection_is_idempotent((sys, y) in polytope_strategy()) {
        let (x, _) = project(&y, &sys).unwrap();
        let (again, _) = project(&x, &sys).unwrap();
        prop_assert!(common::max_abs_diff(&x, &again) <= 1e-9);
    }

    #[test]
    fn lp_strong_duality((sys, y) in polytope_strategy(), maximize in any::<bool>()) {
        let sense = if maximize { Sense::Maximize } else { Sense::Minimize };
        let sol = solve_lp(&y, &sys, sense).unwrap();
        prop_assert!((sol.dual_value(&sys) - sol.value).abs() <= 1e-8 * (1.0 + sol.value.abs()),
            "dual {} vs primal {}", sol.dual_value(&sys), sol.value);
        for &m in &sol.inequality_duals {
            if maximize {
                prop_assert!(m >= -1e-9);
            } else {
                prop_assert!(m <= 1e-9);
            }
        }
    }
}
