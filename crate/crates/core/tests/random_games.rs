//! Invariants of the dynamics and the evaluator on randomly drawn games.

use markov_oftrl::cce::{run_cce_smooth, run_cce_stage, stage_oftrl_step, StageConfig, StageEta};
use markov_oftrl::ce::{run_ce, SmoothConfig};
use markov_oftrl::eval::{swap_regret_tables, Certification, Evaluator};
use markov_oftrl::policy::full_info_utility;
use markov_oftrl::{MarkovGame, PolicyTrajectory, ProductPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_game(seed: u64) -> MarkovGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(1..=3);
    let states = rng.gen_range(1..=3);
    let players = rng.gen_range(1..=3);
    let max_actions = if players == 3 { 2 } else { 3 };
    let counts: Vec<usize> = (0..players).map(|_| rng.gen_range(1..=max_actions)).collect();
    let mut g = MarkovGame::zeroed_with_counts(horizon, states, &counts).unwrap();
    for h in 0..horizon {
        for s in 0..states {
            for a in 0..g.joint().size() {
                for i in 0..players {
                    g.set_reward(h, i, s, a, rng.gen());
                }
                let mut row: Vec<f64> = (0..states).map(|_| rng.gen::<f64>()).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                g.set_transition(h, s, a, &row);
            }
        }
    }
    assert!(g.is_valid());
    g
}

fn assert_on_simplex(traj: &PolicyTrajectory, game: &MarkovGame) {
    for policy in traj.iter() {
        for h in 0..game.horizon() {
            for s in 0..game.num_states() {
                for i in 0..game.num_players() {
                    let d = policy.get(h, s, i);
                    assert!(d.iter().all(|&p| p >= 0.0));
                    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

fn assert_q_in_range(q: &markov_oftrl::QTable, game: &MarkovGame) {
    for h in 0..game.horizon() {
        let (lo, hi) = q.range_at(h);
        let cap = (game.horizon() - h) as f64;
        assert!(lo >= -1e-12 && hi <= cap + 1e-12, "h={h}: [{lo}, {hi}] outside [0, {cap}]");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn smooth_dynamics_invariants(seed in any::<u64>(), eta in 0.05f64..1.0) {
        let game = random_game(seed);
        let t = 24;
        let cps = [1, 5, 12, 24];
        for ce in [true, false] {
            let mut cfg = SmoothConfig::new(t, eta);
            cfg.checkpoints = cps.to_vec();
            cfg.record_utilities = true;
            let run = if ce { run_ce(&game, &cfg) } else { run_cce_smooth(&game, &cfg) }.unwrap();
            assert_on_simplex(&run.trajectory, &game);
            prop_assert!(run.max_stationarity_residual < 1e-10);
            for (_, q) in &run.q_snapshots {
                assert_q_in_range(q, &game);
            }

            let ev = Evaluator::new(&game, &run.trajectory, Certification::Smooth, t).unwrap();
            let table = ev.continuation_table();
            for (c, q) in &run.q_snapshots {
                prop_assert!(ev.value_identity_residual(&table, q, *c).unwrap() < 1e-10);
            }
            for i in 0..game.num_players() {
                let value = ev.certified_value(i, &cps).unwrap();
                let upper = ev.informed_gap(i, &cps).unwrap();
                let lower = ev.markov_lower_bound(i, &cps).unwrap();
                let exact = ev.ce_gap_exact(i, &cps).ok();
                for k in 0..cps.len() {
                    prop_assert!(value[k] >= -1e-12 && value[k] <= game.horizon() as f64 + 1e-12);
                    prop_assert!(lower[k] >= -1e-12);
                    prop_assert!(lower[k] <= upper[k] + 1e-9);
                    if let Some(exact) = &exact {
                        prop_assert!(lower[k] <= exact[k] + 1e-9 && exact[k] <= upper[k] + 1e-9);
                    }
                }
                let tables = swap_regret_tables(&game, &run.trajectory, run.utilities.as_ref(), i, &cps).unwrap();
                prop_assert!(tables.iter().flatten().all(|&r| r >= -1e-9));
            }
        }
    }

    #[test]
    fn stage_dynamics_invariants(seed in any::<u64>(), theory in any::<bool>()) {
        let game = random_game(seed);
        let t = 30;
        let eta = if theory { StageEta::Theory { c: 1.0 } } else { StageEta::Constant(0.3) };
        let run = run_cce_stage(&game, &StageConfig { iterations: t, eta }).unwrap();
        assert_on_simplex(&run.trajectory, &game);
        for q in &run.stage_q {
            assert_q_in_range(q, &game);
        }
        // Each stage restarts from uniform play: its first policy is the
        // optimistic step on the utility against uniform opponents alone.
        let uniform = ProductPolicy::uniform(&game);
        for stage in run.schedule.stages() {
            let first = run.trajectory.policy(stage.start);
            let q = run.q_for_stage(stage.index);
            let eta = run.stage_eta[stage.index - 1];
            for h in 0..game.horizon() {
                for s in 0..game.num_states() {
                    for i in 0..game.num_players() {
                        let u = full_info_utility(&game, q, &uniform, h, s, i);
                        let zeros = vec![0.0; u.len()];
                        let expect = stage_oftrl_step(&zeros, &u, eta, game.horizon()).unwrap();
                        let got = first.get(h, s, i);
                        prop_assert!(got.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-14));
                    }
                }
            }
        }

        let cps = [1, 7, 30];
        let ev = Evaluator::new(&game, &run.trajectory, Certification::Staged(&run.schedule), t).unwrap();
        for i in 0..game.num_players() {
            let upper = ev.informed_gap(i, &cps).unwrap();
            let best = ev.best_response_gap(i, &cps).unwrap();
            let lower = ev.markov_lower_bound(i, &cps).unwrap();
            for k in 0..cps.len() {
                prop_assert!(lower[k] >= -1e-12);
                prop_assert!(lower[k] <= best[k] + 1e-9 && best[k] <= upper[k] + 1e-9);
            }
        }
    }
}

#[test]
fn all_dynamics_are_deterministic() {
    let game = random_game(7);
    let cfg = SmoothConfig::new(40, 0.2);
    assert_eq!(run_ce(&game, &cfg).unwrap().trajectory, run_ce(&game, &cfg).unwrap().trajectory);
    assert_eq!(
        run_cce_smooth(&game, &cfg).unwrap().trajectory,
        run_cce_smooth(&game, &cfg).unwrap().trajectory
    );
    let stage = StageConfig { iterations: 40, eta: StageEta::Constant(0.2) };
    assert_eq!(
        run_cce_stage(&game, &stage).unwrap().trajectory,
        run_cce_stage(&game, &stage).unwrap().trajectory
    );
}
