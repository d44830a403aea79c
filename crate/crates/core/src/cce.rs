//! Optimistic Hedge dynamics for coarse correlated equilibria.
//!
//! [`run_cce_stage`] freezes the Q-estimates within exponentially growing
//! stages and refreshes them with the stage-average Bellman target.
//! [`run_cce_smooth`] keeps the smooth value update of [`crate::ce`] and swaps
//! the BM learner for a single weighted optimistic Hedge learner per state.

use alloc::vec;
use alloc::vec::Vec;

use crate::ce::{all_utilities, run_smooth_dynamics, SmoothConfig, SmoothLearner, SmoothRun};
use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::policy::{PolicyTrajectory, ProductPolicy, QTable};
use crate::schedules::{weight_ratio, StageSchedule};
use crate::simplex::hedge_argmax;

/// Weighted optimistic Hedge, the per-state learner of the smooth CCE variant.
#[derive(Debug, Clone)]
pub struct HedgeLearner {
    /// `Σ_{j<t} w_j u^j / w_{t-1}`
    acc: Vec<f64>,
}

impl HedgeLearner {
    pub fn new(dim: usize) -> Self {
        Self {
            acc: vec![0.0; dim],
        }
    }
}

impl SmoothLearner for HedgeLearner {
    fn step(
        &mut self,
        t: usize,
        horizon: usize,
        utility_prev: &[f64],
        eta: f64,
    ) -> Result<Vec<f64>> {
        if t == 0 {
            return Err(Error::ZeroIteration);
        }
        if t >= 2 {
            let rescale = weight_ratio(t - 1, horizon);
            for (acc, u) in self.acc.iter_mut().zip(utility_prev) {
                *acc = *acc * rescale + u;
            }
        }
        let rescale = weight_ratio(t, horizon);
        let g: Vec<f64> = self
            .acc
            .iter()
            .zip(utility_prev)
            .map(|(acc, u)| acc * rescale + u)
            .collect();
        hedge_argmax(&g, eta)
    }
}

/// Smooth OFTRL for CCE: weighted optimistic Hedge with smooth value updates,
/// certified with the same `α_t^j` mixture as the CE dynamics.
pub fn run_cce_smooth(game: &MarkovGame, config: &SmoothConfig) -> Result<SmoothRun> {
    run_smooth_dynamics(game, config, HedgeLearner::new)
}

/// Learning-rate rule of the stage-based dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageEta {
    Constant(f64),
    /// `η_τ = c / (N · max(1, ln⁴ L_τ))`
    Theory { c: f64 },
}

impl StageEta {
    pub fn for_stage(&self, stage_len: usize, num_players: usize) -> f64 {
        match *self {
            StageEta::Constant(eta) => eta,
            StageEta::Theory { c } => {
                let l4 = libm::pow(libm::log(stage_len as f64), 4.0);
                c / (num_players as f64 * l4.max(1.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub iterations: usize,
    pub eta: StageEta,
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub trajectory: PolicyTrajectory,
    pub schedule: StageSchedule,
    /// `Q^1, Q^2, …`: one table per stage that was entered, plus the one
    /// produced by the last completed stage.
    pub stage_q: Vec<QTable>,
    /// `η_τ` used in each stage.
    pub stage_eta: Vec<f64>,
}

impl StageRun {
    /// `Q^τ` for one-based `τ`.
    pub fn q_for_stage(&self, stage: usize) -> &QTable {
        &self.stage_q[stage - 1]
    }

    /// The frozen estimate the learners faced at iteration `t`.
    pub fn q_at_iteration(&self, t: usize) -> &QTable {
        self.q_for_stage(self.schedule.stage_of(t))
    }
}

/// One optimistic Hedge step on the `1/H`-scaled cumulative-plus-optimism
/// utilities: `softmax(η_τ ℓ / H)`.
pub fn stage_oftrl_step(cumulative: &[f64], optimism: &[f64], eta: f64, horizon: usize) -> Result<Vec<f64>> {
    let g: Vec<f64> = cumulative.iter().zip(optimism).map(|(c, o)| c + o).collect();
    hedge_argmax(&g, eta / horizon as f64)
}

/// `Q^{τ+1}_h = (1/L_τ) Σ_{t' ∈ stage} (r_h + P_h [Q^τ_{h+1} π^{t'}_{h+1}])`.
pub fn stage_value_update(game: &MarkovGame, q_stage: &QTable, policies: &[&ProductPolicy]) -> QTable {
    let mut next = QTable::zeros(game);
    let len = next.step(0).len();
    let mut target = vec![0.0; len];
    let scale = 1.0 / policies.len() as f64;
    for h in 0..game.horizon() {
        let out = next.step_mut(h);
        for pi in policies {
            q_stage.bellman_target(game, pi, h, &mut target);
            for (o, v) in out.iter_mut().zip(&target) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o *= scale;
        }
    }
    next
}

/// Stage-based OFTRL for CCE.
pub fn run_cce_stage(game: &MarkovGame, config: &StageConfig) -> Result<StageRun> {
    if config.iterations == 0 {
        return Err(Error::ZeroIteration);
    }
    let horizon = game.horizon();
    let schedule = StageSchedule::new(horizon, config.iterations);
    let uniform = ProductPolicy::uniform(game);

    let mut stage_q = vec![QTable::zeros(game)];
    let mut stage_eta = Vec::new();
    let mut cumulative = uniform.zeros_like();
    let mut optimism = all_utilities(game, &stage_q[0], &uniform);
    let mut trajectory = PolicyTrajectory::new();
    let mut stage_start = 0usize;

    for stage in schedule.stages() {
        let eta = config.eta.for_stage(stage.planned_len, game.num_players());
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidLearningRate(eta));
        }
        stage_eta.push(eta);
        let q = stage_q.last().expect("at least Q^1").clone();
        for _t in stage.iterations() {
            let mut policy = uniform.clone();
            for h in 0..horizon {
                for s in 0..game.num_states() {
                    for i in 0..game.num_players() {
                        let range = policy.slot_range(h, s, i);
                        let pi = stage_oftrl_step(
                            &cumulative[range.clone()],
                            &optimism[range],
                            eta,
                            horizon,
                        )?;
                        policy.set(h, s, i, &pi);
                    }
                }
            }
            let u = all_utilities(game, &q, &policy);
            for (c, v) in cumulative.iter_mut().zip(&u) {
                *c += v;
            }
            optimism = u;
            trajectory.push(policy);
        }
        if stage.is_complete() {
            let policies: Vec<&ProductPolicy> = (stage.start..=stage.end)
                .map(|t| trajectory.policy(t))
                .collect();
            let next = stage_value_update(game, &q, &policies);
            cumulative.iter_mut().for_each(|c| *c = 0.0);
            // Policies reset to uniform; the next stage's optimism term sees them.
            optimism = all_utilities(game, &next, &uniform);
            stage_q.push(next);
        }
        stage_start += stage.len();
    }
    debug_assert_eq!(stage_start, config.iterations);

    Ok(StageRun {
        trajectory,
        schedule,
        stage_q,
        stage_eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::toy_game;

    #[test]
    fn stage_step_examples() {
        let x = stage_oftrl_step(&[0.0, 0.0], &[0.0, 0.0], 0.2, 2).unwrap();
        assert_eq!(x, vec![0.5, 0.5]);
        let h = 2;
        let l = [h as f64 * core::f64::consts::LN_2, 0.0];
        let x = stage_oftrl_step(&l, &[0.0, 0.0], 1.0, h).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
        let y = stage_oftrl_step(&[l[0] + 5.0, 5.0], &[1.0, 1.0], 1.0, h).unwrap();
        assert!((x[0] - y[0]).abs() < 1e-12);
    }

    #[test]
    fn theory_eta_clamps_small_stages() {
        let eta = StageEta::Theory { c: 1.0 };
        assert_eq!(eta.for_stage(2, 2), 0.5);
        let l = 1000.0f64;
        let expect = 1.0 / (2.0 * libm::pow(libm::log(l), 4.0));
        assert!((eta.for_stage(1000, 2) - expect).abs() < 1e-18);
    }

    #[test]
    fn first_stage_update_is_reward() {
        let g = toy_game();
        let run = run_cce_stage(
            &g,
            &StageConfig {
                iterations: 2,
                eta: StageEta::Constant(0.2),
            },
        )
        .unwrap();
        assert_eq!(run.schedule.num_stages(), 1);
        assert_eq!(run.stage_q.len(), 2);
        let q2 = run.q_for_stage(2);
        for h in 0..2 {
            for i in 0..2 {
                for s in 0..2 {
                    assert_eq!(q2.row(h, i, s), g.reward_row(h, i, s));
                }
            }
        }
        let uniform = ProductPolicy::uniform(&g);
        assert_eq!(run.trajectory.policy(1), &uniform);
        assert_eq!(run.trajectory.policy(2), &uniform);
    }

    #[test]
    fn zero_reward_game_keeps_zero_q() {
        let mut g = toy_game();
        for h in 0..2 {
            for i in 0..2 {
                for s in 0..2 {
                    for a in 0..4 {
                        g.set_reward(h, i, s, a, 0.0);
                    }
                }
            }
        }
        let run = run_cce_stage(&g, &StageConfig { iterations: 30, eta: StageEta::Constant(0.2) }).unwrap();
        assert!(run.stage_q.iter().all(|q| q.max_abs() == 0.0));
    }

    #[test]
    fn h2_t10_three_updates() {
        let g = toy_game();
        let run = run_cce_stage(&g, &StageConfig { iterations: 10, eta: StageEta::Constant(0.2) }).unwrap();
        let lens: Vec<_> = run.schedule.stages().iter().map(|s| s.len()).collect();
        assert_eq!(lens, [2, 3, 4, 1]);
        assert_eq!(run.stage_q.len(), 4);
        assert_eq!(run.trajectory.len(), 10);
        assert_eq!(run.schedule, StageSchedule::new(2, 10));
    }

    #[test]
    fn stage_run_deterministic_and_bounded() {
        let g = toy_game();
        let cfg = StageConfig { iterations: 300, eta: StageEta::Theory { c: 1.0 } };
        let a = run_cce_stage(&g, &cfg).unwrap();
        let b = run_cce_stage(&g, &cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.stage_q, b.stage_q);
        for q in &a.stage_q {
            for h in 0..2 {
                let (lo, hi) = q.range_at(h);
                assert!(lo >= 0.0 && hi <= (2 - h) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn smooth_cce_starts_uniform() {
        let g = toy_game();
        let mut cfg = SmoothConfig::new(100, 0.2);
        cfg.checkpoints = (1..=100).collect();
        let run = run_cce_smooth(&g, &cfg).unwrap();
        assert_eq!(run.trajectory.policy(1), &ProductPolicy::uniform(&g));
        for (_, q) in &run.q_snapshots {
            for h in 0..2 {
                let (lo, hi) = q.range_at(h);
                assert!(lo >= 0.0 && hi <= (2 - h) as f64 + 1e-12);
            }
        }
    }
}
