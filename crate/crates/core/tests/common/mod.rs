#![allow(dead_code)]

use occunash::game::{StationaryPolicy, TransitionKernel};
use rand::Rng;

/// Rows with every entry at least `floor` before normalizing.
pub fn random_kernel<R: Rng>(rng: &mut R, ns: usize, na: usize, floor: f64) -> TransitionKernel {
    let mut probs = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let row: Vec<f64> = (0..ns).map(|_| floor + rng.random::<f64>()).collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.iter().map(|p| p / total));
    }
    TransitionKernel::new(ns, na, probs).unwrap()
}

pub fn random_policy<R: Rng>(rng: &mut R, ns: usize, na: usize) -> StationaryPolicy {
    let weights: Vec<f64> = (0..ns * na).map(|_| 0.01 + rng.random::<f64>()).collect();
    StationaryPolicy::from_weights(ns, na, &weights)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
