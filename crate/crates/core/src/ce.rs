//! BM-OFTRL with smooth value updates.
//!
//! Every `(h, s, i)` runs a Blum–Mansour swap-regret learner whose `A_i` base
//! learners are weighted log-barrier OFTRL instances. Q-estimates are updated
//! incrementally with `α_t = (H+1)/(H+t)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::policy::{full_info_utility, PolicyTrajectory, ProductPolicy, QTable, UtilityHistory};
use crate::schedules::{alpha, weight_ratio};
use crate::simplex::{logbarrier_argmax, stationary_distribution, RowStochasticMatrix};

/// Learning rate `1/(256 N H √(H A_max))` under which the CE rate holds.
pub fn theory_eta(game: &MarkovGame) -> f64 {
    let n = game.num_players() as f64;
    let h = game.horizon() as f64;
    let a = game.max_action_count() as f64;
    1.0 / (256.0 * n * h * libm::sqrt(h * a))
}

/// A per-state learner driven by the smooth dynamics.
pub trait SmoothLearner {
    /// Produce `π^t(s, ·)` from the utility `u^{t-1}` observed at the previous
    /// iteration (`u^0 = 0`).
    fn step(&mut self, t: usize, horizon: usize, utility_prev: &[f64], eta: f64)
        -> Result<Vec<f64>>;

    /// `‖qᵀπ - π‖_∞` of the last step, for learners that assemble one.
    fn last_residual(&self) -> f64 {
        0.0
    }
}

/// Blum–Mansour reduction over weighted log-barrier OFTRL base learners.
#[derive(Debug, Clone)]
pub struct BmLearner {
    dim: usize,
    /// Row `a`: `Σ_{j<t} w_j π^j(a) u^j / w_{t-1}`.
    acc: Vec<f64>,
    /// `π^{t-1}`
    prev: Vec<f64>,
    rows: Option<RowStochasticMatrix>,
    residual: f64,
}

impl BmLearner {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            acc: vec![0.0; dim * dim],
            prev: vec![1.0 / dim as f64; dim],
            rows: None,
            residual: 0.0,
        }
    }

    /// Row-stochastic matrix `q^t` assembled at the last step.
    pub fn rows(&self) -> Option<&RowStochasticMatrix> {
        self.rows.as_ref()
    }

    /// Normalized cumulative utilities; one row per recommendation.
    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }

    /// Combine the per-recommendation base-learner outputs into `π^t`.
    pub fn assemble(rows: RowStochasticMatrix) -> (Vec<f64>, f64, RowStochasticMatrix) {
        let pi = stationary_distribution(&rows);
        let residual = rows.stationarity_residual(&pi);
        (pi, residual, rows)
    }
}

impl SmoothLearner for BmLearner {
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
        if utility_prev.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: utility_prev.len(),
            });
        }
        let n = self.dim;
        if t >= 2 {
            let rescale = weight_ratio(t - 1, horizon);
            for a in 0..n {
                let share = self.prev[a];
                for (acc, u) in self.acc[a * n..(a + 1) * n].iter_mut().zip(utility_prev) {
                    *acc = *acc * rescale + share * u;
                }
            }
        }
        let rescale = weight_ratio(t, horizon);
        let mut entries = Vec::with_capacity(n * n);
        let mut g = vec![0.0; n];
        for a in 0..n {
            let share = self.prev[a];
            for ((gv, acc), u) in g.iter_mut().zip(&self.acc[a * n..(a + 1) * n]).zip(utility_prev) {
                *gv = acc * rescale + share * u;
            }
            entries.extend(logbarrier_argmax(&g, eta)?);
        }
        let rows = RowStochasticMatrix::new(n, entries)?;
        let (pi, residual, rows) = Self::assemble(rows);
        self.residual = residual;
        self.rows = Some(rows);
        self.prev.copy_from_slice(&pi);
        Ok(pi)
    }

    fn last_residual(&self) -> f64 {
        self.residual
    }
}

/// One smooth value update, in place: backward over `h` with
/// `Q^t_h = (1-α_t) Q^{t-1}_h + α_t (r_h + P_h [Q^t_{h+1} π^t_{h+1}])`.
pub fn smooth_q_update(game: &MarkovGame, q: &mut QTable, policy: &ProductPolicy, t: usize) {
    let a = alpha(t, game.horizon());
    let len = q.step(0).len();
    let mut target = vec![0.0; len];
    for h in (0..game.horizon()).rev() {
        q.bellman_target(game, policy, h, &mut target);
        for (qv, tv) in q.step_mut(h).iter_mut().zip(&target) {
            *qv = (1.0 - a) * *qv + a * tv;
        }
    }
}

/// Settings shared by the smooth dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConfig {
    pub iterations: usize,
    pub eta: f64,
    /// Iterations at which `Q^t` is snapshotted (sorted, within `1..=T`).
    pub checkpoints: Vec<usize>,
    /// Record `u^t_{h,i}(s, ·)` for every iteration.
    pub record_utilities: bool,
}

impl SmoothConfig {
    pub fn new(iterations: usize, eta: f64) -> Self {
        Self {
            iterations,
            eta,
            checkpoints: Vec::new(),
            record_utilities: false,
        }
    }
}

/// Output of a smooth run.
#[derive(Debug, Clone)]
pub struct SmoothRun {
    pub trajectory: PolicyTrajectory,
    /// `(t, Q^t)` for each checkpoint.
    pub q_snapshots: Vec<(usize, QTable)>,
    pub final_q: QTable,
    pub utilities: Option<UtilityHistory>,
    /// Largest BM fixed-point residual seen (zero for learners without one).
    pub max_stationarity_residual: f64,
}

impl SmoothRun {
    pub fn q_at(&self, t: usize) -> Option<&QTable> {
        self.q_snapshots
            .iter()
            .find(|(c, _)| *c == t)
            .map(|(_, q)| q)
    }
}

/// `[Q_{h,i} π_{h,-i}](s, ·)` for all `(h, s, i)`, laid out like `policy`.
pub(crate) fn all_utilities(game: &MarkovGame, q: &QTable, policy: &ProductPolicy) -> Vec<f64> {
    let mut out = policy.zeros_like();
    for h in 0..game.horizon() {
        for s in 0..game.num_states() {
            for i in 0..game.num_players() {
                let u = full_info_utility(game, q, policy, h, s, i);
                out[policy.slot_range(h, s, i)].copy_from_slice(&u);
            }
        }
    }
    out
}

pub(crate) fn run_smooth_dynamics<L, F>(
    game: &MarkovGame,
    config: &SmoothConfig,
    mut make_learner: F,
) -> Result<SmoothRun>
where
    L: SmoothLearner,
    F: FnMut(usize) -> L,
{
    if !(config.eta > 0.0 && config.eta.is_finite()) {
        return Err(Error::InvalidLearningRate(config.eta));
    }
    let horizon = game.horizon();
    let (ns, np) = (game.num_states(), game.num_players());
    let mut learners: Vec<L> = Vec::with_capacity(horizon * ns * np);
    for _h in 0..horizon {
        for _s in 0..ns {
            for i in 0..np {
                learners.push(make_learner(game.action_count(i)));
            }
        }
    }

    let mut q = QTable::zeros(game);
    let mut policy = ProductPolicy::uniform(game);
    // u^0 = [Q^0 π^0_{-i}] = 0
    let mut utilities = policy.zeros_like();
    let mut trajectory = PolicyTrajectory::new();
    let mut snapshots = Vec::new();
    let mut history = config.record_utilities.then(|| UtilityHistory::new(game));
    let mut checkpoints = config.checkpoints.iter().peekable();
    let mut max_residual: f64 = 0.0;

    for t in 1..=config.iterations {
        for h in 0..horizon {
            for s in 0..ns {
                for i in 0..np {
                    let range = policy.slot_range(h, s, i);
                    let learner = &mut learners[(h * ns + s) * np + i];
                    let pi = learner.step(t, horizon, &utilities[range], config.eta)?;
                    max_residual = max_residual.max(learner.last_residual());
                    policy.set(h, s, i, &pi);
                }
            }
        }
        smooth_q_update(game, &mut q, &policy, t);
        utilities = all_utilities(game, &q, &policy);
        if let Some(history) = history.as_mut() {
            history.push_block(&utilities);
        }
        while checkpoints.peek().is_some_and(|&&c| c <= t) {
            if *checkpoints.next().unwrap() == t {
                snapshots.push((t, q.clone()));
            }
        }
        trajectory.push(policy.clone());
    }

    Ok(SmoothRun {
        trajectory,
        q_snapshots: snapshots,
        final_q: q,
        utilities: history,
        max_stationarity_residual: max_residual,
    })
}

/// Runs BM-OFTRL with smooth value updates for `config.iterations` iterations.
///
/// Deterministic: repeated runs produce bit-identical trajectories.
pub fn run_ce(game: &MarkovGame, config: &SmoothConfig) -> Result<SmoothRun> {
    run_smooth_dynamics(game, config, BmLearner::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::toy_game;
    use crate::schedules::alpha_mix;

    #[test]
    fn first_step_is_uniform() {
        let mut l = BmLearner::new(3);
        let pi = l.step(1, 2, &[0.0; 3], 0.2).unwrap();
        assert!(pi.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let rows = l.rows().unwrap();
        for r in 0..3 {
            assert!(rows.row(r).iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn assembled_rows_match_hand_solve() {
        let rows = RowStochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let (pi, residual, _) = BmLearner::assemble(rows);
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-14 && (pi[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!(residual < 1e-15);
    }

    #[test]
    fn logbarrier_rows_can_realize_target_matrix() {
        // For the log-barrier step, g_a' = (λ - 1/x_a')/η reproduces any interior x.
        let eta = 0.5;
        let target = [[0.5, 0.5], [0.25, 0.75]];
        let mut entries = Vec::new();
        for row in target {
            let g: Vec<f64> = row.iter().map(|&x| -1.0 / (x * eta)).collect();
            entries.extend(logbarrier_argmax(&g, eta).unwrap());
        }
        for (e, t) in entries.iter().zip(target.iter().flatten()) {
            assert!((e - t).abs() < 1e-12);
        }
        let (pi, _, _) = BmLearner::assemble(RowStochasticMatrix::new(2, entries).unwrap());
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn accumulator_matches_weighted_sum() {
        use crate::schedules::oftrl_weight;
        let h = 2;
        let mut l = BmLearner::new(2);
        let utils = [[0.3, 0.9], [1.2, 0.1], [0.4, 0.4], [2.0, 0.5], [0.0, 1.0]];
        let mut policies = vec![vec![0.5, 0.5]];
        let mut prev_u = [0.0, 0.0];
        for t in 1..=utils.len() {
            let pi = l.step(t, h, &prev_u, 0.3).unwrap();
            // After the step at t, acc holds Σ_{j<t} w_j π^j(a) u^j / w_{t-1}.
            if t >= 2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let direct: f64 = (1..t)
                            .map(|j| oftrl_weight(j, h) * policies[j][a] * utils[j - 1][b])
                            .sum::<f64>()
                            / oftrl_weight(t - 1, h);
                        assert!((l.accumulator()[a * 2 + b] - direct).abs() < 1e-12);
                    }
                }
            }
            policies.push(pi);
            prev_u = utils[t - 1];
        }
    }

    #[test]
    fn q_update_first_iteration() {
        let g = toy_game();
        let mut q = QTable::zeros(&g);
        let pi = ProductPolicy::uniform(&g);
        smooth_q_update(&g, &mut q, &pi, 1);
        for i in 0..2 {
            for s in 0..2 {
                assert_eq!(q.row(1, i, s), g.reward_row(1, i, s));
            }
        }
        let j00 = g.joint().encode(&[0, 0]);
        assert!((q.get(0, 0, 0, j00) - 1.325).abs() < 1e-12);
    }

    #[test]
    fn run_t1_uniform_and_deterministic() {
        let g = toy_game();
        let mut cfg = SmoothConfig::new(1, 0.2);
        cfg.checkpoints = vec![1];
        let run = run_ce(&g, &cfg).unwrap();
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.trajectory.policy(1), &ProductPolicy::uniform(&g));
        let j00 = g.joint().encode(&[0, 0]);
        assert!((run.q_at(1).unwrap().get(0, 0, 0, j00) - 1.325).abs() < 1e-12);

        let cfg = SmoothConfig::new(40, 0.2);
        let a = run_ce(&g, &cfg).unwrap();
        let b = run_ce(&g, &cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.final_q, b.final_q);
    }

    #[test]
    fn second_iteration_leaves_uniform() {
        let g = toy_game();
        let run = run_ce(&g, &SmoothConfig::new(2, 0.2)).unwrap();
        let pi2 = run.trajectory.policy(2);
        assert_ne!(pi2, &ProductPolicy::uniform(&g));
        assert!(pi2.as_slice().iter().any(|&p| (p - 0.5).abs() > 1e-6));
    }

    #[test]
    fn q_range_and_fixed_point_residual() {
        let g = toy_game();
        let mut cfg = SmoothConfig::new(200, 0.2);
        cfg.checkpoints = (1..=200).collect();
        let run = run_ce(&g, &cfg).unwrap();
        assert!(run.max_stationarity_residual < 1e-10);
        for (_, q) in &run.q_snapshots {
            for h in 0..g.horizon() {
                let (lo, hi) = q.range_at(h);
                assert!(lo >= 0.0 && hi <= (g.horizon() - h) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn incremental_q_matches_explicit_mixture() {
        let g = toy_game();
        let horizon = g.horizon();
        let t_max = 50;
        let mut cfg = SmoothConfig::new(t_max, 0.2);
        cfg.checkpoints = (1..=t_max).collect();
        let run = run_ce(&g, &cfg).unwrap();
        let len = run.final_q.step(0).len();
        let mut target = vec![0.0; len];
        for t in 1..=t_max {
            let mix = alpha_mix(t, horizon);
            for h in 0..horizon {
                let mut explicit = vec![0.0; len];
                for (j, w) in mix.iter().enumerate() {
                    let qj = run.q_at(j + 1).unwrap();
                    qj.bellman_target(&g, run.trajectory.policy(j + 1), h, &mut target);
                    for (e, v) in explicit.iter_mut().zip(&target) {
                        *e += w * v;
                    }
                }
                let incremental = run.q_at(t).unwrap().step(h);
                for (a, b) in incremental.iter().zip(&explicit) {
                    assert!((a - b).abs() < 1e-9, "t={t} h={h}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_eta() {
        let g = toy_game();
        assert!(matches!(
            run_ce(&g, &SmoothConfig::new(3, 0.0)),
            Err(Error::InvalidLearningRate(_))
        ));
    }

    #[test]
    fn theory_eta_toy() {
        assert!((theory_eta(&toy_game()) - 1.0 / 2048.0).abs() < 1e-18);
    }
}
