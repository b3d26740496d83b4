//! Whole-run behaviour on small games.

use occunash::evaluation::{best_response_value, ni_gap, occupancies, payoff_gradient, value_of};
use occunash::game::{builtin, validate_game, JointGame, StationaryPolicy, TransitionKernel};
use occunash::simulator::{self, RunParameters, SimulationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One player, two states; action 1 in state 1 pays most but state 1 is
/// only reached by moving.
fn single_player() -> JointGame {
    let kernel = TransitionKernel::new(2, 2, vec![0.8, 0.2, 0.3, 0.7, 0.6, 0.4, 0.2, 0.8]).unwrap();
    JointGame::new(vec![kernel], vec![vec![0.2, 0.5, 0.1, 1.0]]).unwrap()
}

fn run(game: &JointGame, episodes: usize, seed: u64) -> occunash::RunRecord {
    let params = RunParameters { episodes, delta: Some(0.02), ..RunParameters::default() };
    let mut config = SimulationConfig::build(game, &params, seed).unwrap();
    config.record_every = episodes;
    simulator::run(game, &config).unwrap()
}

#[test]
fn single_player_approaches_the_lp_optimum() {
    let game = single_player();
    let own = occupancies(&game, &[StationaryPolicy::uniform(2, 2)]).unwrap();
    let (optimum, _) = best_response_value(&game, 0, &own, 0.02).unwrap();
    let short: f64 = (0..5).map(|s| run(&game, 50, s).final_gap().unwrap()).sum::<f64>() / 5.0;
    let long: f64 = (0..5).map(|s| run(&game, 800, s).final_gap().unwrap()).sum::<f64>() / 5.0;
    assert!(long < short, "gap {long} at K=800 vs {short} at K=50");
    assert!(long < 0.05, "gap {long}");
    let record = run(&game, 800, 9);
    let policy = simulator::replay_policies(&record, &game, 800).unwrap();
    let value = value_of(&game, &occupancies(&game, &policy).unwrap())[0];
    assert!(optimum - value < 0.1, "final value {value} vs optimum {optimum}");
}

#[test]
fn grid_search_agrees_with_lp_best_response() {
    // With δ = 0 the best response is attained at a deterministic policy, so
    // a 0.05 grid over each state's first-action probability contains it.
    let game = builtin::g1();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let policies: Vec<StationaryPolicy> = (0..2)
            .map(|_| {
                let (p, q) = (rng.random::<f64>(), rng.random::<f64>());
                StationaryPolicy::new(2, 2, vec![p, 1.0 - p, q, 1.0 - q]).unwrap()
            })
            .collect();
        let report = ni_gap(&game, &policies, &[0.0, 0.0]).unwrap();
        let mut grid_gap = 0.0;
        for i in 0..2 {
            let mut best = f64::NEG_INFINITY;
            for a in 0..=20 {
                for b in 0..=20 {
                    let (p, q) = (a as f64 / 20.0, b as f64 / 20.0);
                    let mut deviated = policies.clone();
                    deviated[i] = StationaryPolicy::new(2, 2, vec![p, 1.0 - p, q, 1.0 - q]).unwrap();
                    let rhos = occupancies(&game, &deviated).unwrap();
                    best = best.max(value_of(&game, &rhos)[i]);
                }
            }
            assert!(best <= report.best_response[i] + 1e-9);
            grid_gap += best - report.values[i];
        }
        assert!((grid_gap - report.gap).abs() < 1e-9, "grid {grid_gap} vs lp {}", report.gap);
    }
}

#[test]
fn episode_length_stays_under_cover_time_bound() {
    let game = builtin::g3();
    let report = validate_game(&game);
    let (delta, d) = (0.05, 20);
    let params = RunParameters { episodes: 60, delta: Some(delta), warmup: Some(d), ..RunParameters::default() };
    let mut config = SimulationConfig::build(&game, &params, 4).unwrap();
    config.oracle = false;
    let record = simulator::run(&game, &config).unwrap();
    let bound = d as f64 + 40.0 * 2.0 * 4f64.ln() / (report.alpha * delta);
    assert!(record.mean_episode_len() <= bound, "{} > {bound}", record.mean_episode_len());
    for row in &record.rows {
        assert!(row.tau_k > d);
    }
}

#[test]
fn reward_estimates_are_nearly_unbiased_on_g3() {
    let game = builtin::g3();
    let tau = validate_game(&game).tau_bound;
    let d = 15;
    let policies: Vec<StationaryPolicy> = (0..3).map(|_| StationaryPolicy::uniform(2, 2)).collect();
    let rhos = occupancies(&game, &policies).unwrap();
    let estimates = simulator::sample_reward_estimates(&game, &policies, d, 1500, 8).unwrap();
    let tolerance = (-(d as f64) / tau).exp() + 0.03;
    for (i, per_episode) in estimates.iter().enumerate() {
        let truth = payoff_gradient(&game, i, &rhos);
        for (pair, v) in truth.iter().enumerate() {
            let mean = per_episode.iter().map(|r| r[pair]).sum::<f64>() / per_episode.len() as f64;
            assert!((mean - v).abs() <= tolerance, "player {i} pair {pair}: {mean} vs {v}");
        }
    }
}
