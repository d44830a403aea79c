//! Exact evaluation of certified correlated policies.
//!
//! A certified policy `π̄^t_h` draws a history index at every step and plays
//! the recorded product policy of that index. The draw at the next step only
//! depends on the index drawn now, so values are Markov in
//! `(h, index node, s)` and every quantity here is an exact backward
//! induction over those nodes. No sampling is involved.
//!
//! Two index processes are supported, see [`Certification`].

mod regret;
mod report;

pub use regret::{
    stage_avg_regret, stage_regret_max, swap_regret, swap_regret_series, swap_regret_tables,
};
pub use report::{evaluate, EquilibriumKind, EvalOptions, GapReport, PlayerGaps};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::policy::{PolicyTrajectory, ProductPolicy, QTable};
use crate::schedules::{alpha, StageSchedule};

/// Default cap on the number of deviations enumerated exhaustively.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// How a certified policy draws history indices.
#[derive(Debug, Clone, Copy)]
pub enum Certification<'a> {
    /// Node `t` draws `j ≤ t` with probability `α_t^j` and continues at node `j`.
    /// The output at horizon `T` is `π̄^T_1`.
    Smooth,
    /// Node `τ ≥ 2` draws `j` uniformly from stage `τ-1` and continues at node
    /// `τ-1`. Node 1 has no prior stage and plays the uniform product policy.
    /// The output at horizon `T` mixes `π̄^t_1` uniformly over `t ∈ [T]`.
    Staged(&'a StageSchedule),
}

/// Values indexed by `(h, node, s)` with `h ∈ 0..=H` and the `h = H` layer zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeValues {
    horizon: usize,
    nodes: usize,
    states: usize,
    data: Vec<f64>,
}

impl NodeValues {
    fn zeros(horizon: usize, nodes: usize, states: usize) -> Self {
        Self {
            horizon,
            nodes,
            states,
            data: vec![0.0; (horizon + 1) * nodes * states],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Value at step `h` (zero-based), zero-based node, state `s`.
    pub fn get(&self, h: usize, node: usize, s: usize) -> f64 {
        self.data[(h * self.nodes + node) * self.states + s]
    }

    fn layer(&self, h: usize) -> &[f64] {
        let w = self.nodes * self.states;
        &self.data[h * w..(h + 1) * w]
    }

    fn split_layers(&mut self, h: usize) -> (&mut [f64], &[f64]) {
        let w = self.nodes * self.states;
        let (lo, hi) = self.data.split_at_mut((h + 1) * w);
        (&mut lo[h * w..], &hi[..w])
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Certified values `V^{π̄^j_h}_{h,i}(s)` for every player.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTable {
    pub per_player: Vec<NodeValues>,
}

/// What the deviating player does with the utility vector `U(a')` at a node.
#[derive(Debug, Clone, Copy)]
enum Rule<'r> {
    /// Play the recommendation.
    Follow,
    /// Best action knowing the drawn index.
    Informed,
    /// Best action against the mixture over indices; the drawn index is
    /// revealed only after acting.
    Deferred,
    /// Strategy modification `φ`, flattened as `[(h·S + s)·A + a]`.
    Modification(&'r [usize]),
    /// Deterministic Markov action `μ`, flattened as `[h·S + s]`.
    Fixed(&'r [usize]),
}

struct Scratch {
    utility: Vec<f64>,
    digits: Vec<usize>,
}

/// Exact evaluator over a recorded trajectory.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    game: &'a MarkovGame,
    trajectory: &'a PolicyTrajectory,
    certification: Certification<'a>,
    up_to: usize,
    uniform: ProductPolicy,
    enumeration_limit: u128,
}

impl<'a> Evaluator<'a> {
    /// Evaluator for certified policies `π̄^t` with `t ≤ up_to`.
    pub fn new(
        game: &'a MarkovGame,
        trajectory: &'a PolicyTrajectory,
        certification: Certification<'a>,
        up_to: usize,
    ) -> Result<Self> {
        if up_to == 0 {
            return Err(Error::ZeroIteration);
        }
        if up_to > trajectory.len() {
            return Err(Error::TrajectoryTooShort {
                requested: up_to,
                available: trajectory.len(),
            });
        }
        if let Certification::Staged(schedule) = certification {
            if schedule.total() < up_to {
                return Err(Error::TrajectoryTooShort {
                    requested: up_to,
                    available: schedule.total(),
                });
            }
        }
        Ok(Self {
            game,
            trajectory,
            certification,
            up_to,
            uniform: ProductPolicy::uniform(game),
            enumeration_limit: ENUMERATION_LIMIT,
        })
    }

    pub fn with_enumeration_limit(mut self, limit: u128) -> Self {
        self.enumeration_limit = limit;
        self
    }

    pub fn game(&self) -> &MarkovGame {
        self.game
    }

    pub fn certification(&self) -> Certification<'a> {
        self.certification
    }

    pub fn up_to(&self) -> usize {
        self.up_to
    }

    fn num_nodes(&self) -> usize {
        match self.certification {
            Certification::Smooth => self.up_to,
            Certification::Staged(schedule) => schedule.stage_of(self.up_to),
        }
    }

    fn check_checkpoint(&self, t: usize) -> Result<()> {
        if t == 0 {
            return Err(Error::ZeroIteration);
        }
        if t > self.up_to {
            return Err(Error::TrajectoryTooShort {
                requested: t,
                available: self.up_to,
            });
        }
        Ok(())
    }

    /// `out[a'] = [(r_{h,i} + P_h cont)(s, a', ·) π_{h,-i}(s, ·)]`
    fn deviation_utility(
        &self,
        policy: &ProductPolicy,
        h: usize,
        s: usize,
        player: usize,
        cont: &[f64],
        scratch: &mut Scratch,
    ) {
        let game = self.game;
        let space = game.joint();
        let n = space.num_players();
        let last_step = h + 1 == game.horizon();
        scratch.utility.iter_mut().for_each(|v| *v = 0.0);
        scratch.digits.iter_mut().for_each(|d| *d = 0);
        let rewards = game.reward_row(h, player, s);
        for (flat, &r) in rewards.iter().enumerate() {
            if flat > 0 {
                let mut k = n;
                while k > 0 {
                    k -= 1;
                    scratch.digits[k] += 1;
                    if scratch.digits[k] < space.count(k) {
                        break;
                    }
                    scratch.digits[k] = 0;
                }
            }
            let mut w = 1.0;
            for k in 0..n {
                if k != player {
                    w *= policy.get(h, s, k)[scratch.digits[k]];
                }
            }
            if w == 0.0 {
                continue;
            }
            let value = if last_step {
                r
            } else {
                r + game.expected_next(h, s, flat, cont)
            };
            scratch.utility[scratch.digits[player]] += w * value;
        }
    }

    fn apply(&self, rule: Rule<'_>, own: &[f64], h: usize, s: usize, utility: &[f64]) -> f64 {
        match rule {
            Rule::Follow => own.iter().zip(utility).map(|(p, u)| p * u).sum(),
            Rule::Informed | Rule::Deferred => {
                utility.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            Rule::Modification(phi) => {
                let a = own.len();
                let base = (h * self.game.num_states() + s) * a;
                own.iter()
                    .enumerate()
                    .map(|(rec, p)| p * utility[phi[base + rec]])
                    .sum()
            }
            Rule::Fixed(mu) => utility[mu[h * self.game.num_states() + s]],
        }
    }

    fn backward(&self, player: usize, rule: Rule<'_>) -> NodeValues {
        let game = self.game;
        let horizon = game.horizon();
        let ns = game.num_states();
        let nodes = self.num_nodes();
        let mut values = NodeValues::zeros(horizon, nodes, ns);
        let mut scratch = Scratch {
            utility: vec![0.0; game.action_count(player)],
            digits: vec![0; game.num_players()],
        };
        let na = game.action_count(player);
        // Running utility mixture per state, used by `Rule::Deferred`.
        let mut mixture = vec![0.0; ns * na];
        for h in (0..horizon).rev() {
            let (current, next) = values.split_layers(h);
            match self.certification {
                Certification::Smooth => {
                    for t in 1..=nodes {
                        let policy = self.trajectory.policy(t);
                        let a = alpha(t, horizon);
                        let node = t - 1;
                        for s in 0..ns {
                            let cont = &next[node * ns..(node + 1) * ns];
                            self.deviation_utility(policy, h, s, player, cont, &mut scratch);
                            current[node * ns + s] = if let Rule::Deferred = rule {
                                let mix = &mut mixture[s * na..(s + 1) * na];
                                for (m, u) in mix.iter_mut().zip(&scratch.utility) {
                                    *m = if t == 1 { *u } else { (1.0 - a) * *m + a * u };
                                }
                                max_of(mix)
                            } else {
                                let step = self.apply(
                                    rule,
                                    policy.get(h, s, player),
                                    h,
                                    s,
                                    &scratch.utility,
                                );
                                if t == 1 {
                                    step
                                } else {
                                    (1.0 - a) * current[(node - 1) * ns + s] + a * step
                                }
                            };
                        }
                    }
                }
                Certification::Staged(schedule) => {
                    for s in 0..ns {
                        let cont = &next[..ns];
                        self.deviation_utility(&self.uniform, h, s, player, cont, &mut scratch);
                        current[s] =
                            self.apply(rule, self.uniform.get(h, s, player), h, s, &scratch.utility);
                    }
                    for node in 1..nodes {
                        let prior = schedule.stage(node);
                        let scale = 1.0 / prior.len() as f64;
                        for s in 0..ns {
                            let cont = &next[(node - 1) * ns..node * ns];
                            let mut total = 0.0;
                            let mix = &mut mixture[..na];
                            mix.iter_mut().for_each(|m| *m = 0.0);
                            for j in prior.iterations() {
                                let policy = self.trajectory.policy(j);
                                self.deviation_utility(policy, h, s, player, cont, &mut scratch);
                                if let Rule::Deferred = rule {
                                    for (m, u) in mix.iter_mut().zip(&scratch.utility) {
                                        *m += u;
                                    }
                                } else {
                                    total += self.apply(
                                        rule,
                                        policy.get(h, s, player),
                                        h,
                                        s,
                                        &scratch.utility,
                                    );
                                }
                            }
                            if let Rule::Deferred = rule {
                                total = max_of(mix);
                            }
                            current[node * ns + s] = total * scale;
                        }
                    }
                }
            }
        }
        values
    }

    /// Zero-based node of the certified policy `π̄^t`.
    fn node_of(&self, t: usize) -> usize {
        match self.certification {
            Certification::Smooth => t - 1,
            Certification::Staged(schedule) => schedule.stage_of(t) - 1,
        }
    }

    /// Value of the output policy at horizon `checkpoint` from `s_1`.
    ///
    /// Smooth: `V(π̄^T_1)`. Staged: `(1/T) Σ_{t ≤ T} V(π̄^t_1)`.
    pub fn headline(&self, values: &NodeValues, checkpoint: usize) -> f64 {
        let s1 = self.game.initial_state();
        match self.certification {
            Certification::Smooth => values.get(0, checkpoint - 1, s1),
            Certification::Staged(schedule) => {
                let mut total = 0.0;
                for stage in schedule.stages() {
                    if stage.start > checkpoint {
                        break;
                    }
                    let count = stage.end.min(checkpoint) + 1 - stage.start;
                    total += count as f64 * values.get(0, stage.index - 1, s1);
                }
                total / checkpoint as f64
            }
        }
    }

    /// Number of `t ≤ checkpoint` whose certified policy has no prior stage
    /// and falls back to uniform play (always zero for smooth certification).
    pub fn fallback_count(&self, checkpoint: usize) -> usize {
        match self.certification {
            Certification::Smooth => 0,
            Certification::Staged(schedule) => schedule.stage(1).end.min(checkpoint),
        }
    }

    /// Certified values of `player` at every node.
    pub fn certified_values(&self, player: usize) -> NodeValues {
        self.backward(player, Rule::Follow)
    }

    /// Certified values of every player.
    pub fn continuation_table(&self) -> ContinuationTable {
        ContinuationTable {
            per_player: (0..self.game.num_players())
                .map(|i| self.certified_values(i))
                .collect(),
        }
    }

    /// `V^{π̄}_{1,i}(s_1)` of the output policy at each checkpoint.
    pub fn certified_value(&self, player: usize, checkpoints: &[usize]) -> Result<Vec<f64>> {
        checkpoints.iter().try_for_each(|&t| self.check_checkpoint(t))?;
        let values = self.certified_values(player);
        Ok(checkpoints.iter().map(|&t| self.headline(&values, t)).collect())
    }

    /// Upper bound on the gap that grants the deviator the drawn index.
    ///
    /// For smooth certification this bounds both the CE gap and the CCE gap:
    /// under product play the opponents' actions do not depend on the
    /// recommendation, so the per-recommendation best response collapses to a
    /// per-index one.
    pub fn informed_gap(&self, player: usize, checkpoints: &[usize]) -> Result<Vec<f64>> {
        checkpoints.iter().try_for_each(|&t| self.check_checkpoint(t))?;
        let base = self.certified_values(player);
        let informed = self.backward(player, Rule::Informed);
        Ok(checkpoints
            .iter()
            .map(|&t| self.headline(&informed, t) - self.headline(&base, t))
            .collect())
    }

    /// Informed gap of the single certified policy `π̄^t_1`.
    ///
    /// Under staged certification `t` must lie past the first stage.
    pub fn informed_gap_at(&self, player: usize, t: usize) -> Result<f64> {
        self.check_checkpoint(t)?;
        if let Certification::Staged(schedule) = self.certification {
            if schedule.stage_of(t) == 1 {
                return Err(Error::NoPriorStage { t });
            }
        }
        let s1 = self.game.initial_state();
        let node = self.node_of(t);
        let base = self.certified_values(player);
        let informed = self.backward(player, Rule::Informed);
        Ok(informed.get(0, node, s1) - base.get(0, node, s1))
    }

    /// Upper bound on the best-response gap that reveals the drawn index to
    /// the deviator only after it acts at each step.
    ///
    /// Under staged certification the continuation node does not depend on
    /// the index drawn within a stage, so this is the exact best-response gap
    /// `V^{†, π̄^t_{-i}} - V^{π̄^t}` of each `π̄^t`, averaged over `t ≤ T`.
    /// Under smooth certification it lies between the Markov lower bound and
    /// [`Self::informed_gap`].
    pub fn best_response_gap(&self, player: usize, checkpoints: &[usize]) -> Result<Vec<f64>> {
        checkpoints.iter().try_for_each(|&t| self.check_checkpoint(t))?;
        let base = self.certified_values(player);
        let deferred = self.backward(player, Rule::Deferred);
        Ok(checkpoints
            .iter()
            .map(|&t| self.headline(&deferred, t) - self.headline(&base, t))
            .collect())
    }

    /// `(h, s)` slots whose deviation can affect the value from `s_1`:
    /// every state after the first step and only `s_1` at the first step.
    fn relevant_slots(&self) -> Vec<(usize, usize)> {
        let mut slots = vec![(0, self.game.initial_state())];
        for h in 1..self.game.horizon() {
            for s in 0..self.game.num_states() {
                slots.push((h, s));
            }
        }
        slots
    }

    fn guard(&self, choices_per_slot: u128, slots: usize) -> Result<u128> {
        let mut count: u128 = 1;
        for _ in 0..slots {
            count = count.saturating_mul(choices_per_slot);
            if count > self.enumeration_limit {
                return Err(Error::EnumerationGuard {
                    count,
                    limit: self.enumeration_limit,
                });
            }
        }
        Ok(count)
    }

    /// Number of strategy modifications [`Self::ce_gap_exact`] would enumerate.
    pub fn modification_count(&self, player: usize) -> u128 {
        let a = self.game.action_count(player) as u128;
        let per_slot = (0..a).fold(1u128, |acc, _| acc.saturating_mul(a));
        let slots = self.relevant_slots().len();
        (0..slots).fold(1u128, |acc, _| acc.saturating_mul(per_slot))
    }

    /// Exact CE gap `max_φ V^{φ ⋄ π̄} - V^{π̄}` by exhaustive enumeration of
    /// strategy modifications.
    ///
    /// Slots that cannot influence the value from `s_1` (first step, other
    /// states) are held at the identity.
    pub fn ce_gap_exact(&self, player: usize, checkpoints: &[usize]) -> Result<Vec<f64>> {
        checkpoints.iter().try_for_each(|&t| self.check_checkpoint(t))?;
        let a = self.game.action_count(player);
        let per_slot = (0..a).fold(1u128, |acc, _| acc.saturating_mul(a as u128));
        let slots = self.relevant_slots();
        self.guard(per_slot, slots.len())?;

        let base = self.certified_values(player);
        let baseline: Vec<f64> = checkpoints.iter().map(|&t| self.headline(&base, t)).collect();
        let ns = self.game.num_states();
        let mut phi: Vec<usize> = (0..self.game.horizon() * ns)
            .flat_map(|_| 0..a)
            .collect();
        // Identity first, so the gap is never negative.
        let mut best = baseline.clone();
        // One base-A digit per (slot, recommendation).
        let mut odometer = vec![0usize; slots.len() * a];
        loop {
            for (k, &(h, s)) in slots.iter().enumerate() {
                let base = (h * ns + s) * a;
                phi[base..base + a].copy_from_slice(&odometer[k * a..(k + 1) * a]);
            }
            let values = self.backward(player, Rule::Modification(&phi));
            for (b, &t) in best.iter_mut().zip(checkpoints) {
                *b = b.max(self.headline(&values, t));
            }
            if !advance(&mut odometer, a) {
                break;
            }
        }
        Ok(best.iter().zip(&baseline).map(|(b, v)| b - v).collect())
    }

    /// Lower bound on the best-response gap from deterministic Markov deviations.
    ///
    /// Each such deviation is also a constant strategy modification, so this
    /// bounds the CE gap from below as well.
    pub fn markov_lower_bound(&self, player: usize, checkpoints: &[usize]) -> Result<Vec<f64>> {
        checkpoints.iter().try_for_each(|&t| self.check_checkpoint(t))?;
        let a = self.game.action_count(player);
        let slots = self.relevant_slots();
        self.guard(a as u128, slots.len())?;

        let base = self.certified_values(player);
        let ns = self.game.num_states();
        let mut mu = vec![0usize; self.game.horizon() * ns];
        let mut odometer = vec![0usize; slots.len()];
        let mut best = vec![f64::NEG_INFINITY; checkpoints.len()];
        loop {
            for (k, &(h, s)) in slots.iter().enumerate() {
                mu[h * ns + s] = odometer[k];
            }
            let values = self.backward(player, Rule::Fixed(&mu));
            for (b, &t) in best.iter_mut().zip(checkpoints) {
                *b = b.max(self.headline(&values, t));
            }
            if !advance(&mut odometer, a) {
                break;
            }
        }
        Ok(best
            .iter()
            .zip(checkpoints)
            .map(|(b, &t)| b - self.headline(&base, t))
            .collect())
    }

    /// `max |Q^t_{h,i}(s, a) - (r_{h,i} + P_h V^{π̄^t_{h+1}}_i)(s, a)|` for smooth
    /// certification, where `q` is the learner's `Q^t`.
    pub fn value_identity_residual(&self, table: &ContinuationTable, q: &QTable, t: usize) -> Result<f64> {
        self.check_checkpoint(t)?;
        let game = self.game;
        let ns = game.num_states();
        let node = self.node_of(t);
        let mut worst: f64 = 0.0;
        for (i, values) in table.per_player.iter().enumerate() {
            for h in 0..game.horizon() {
                let next = values.layer(h + 1);
                let cont = &next[node * ns..(node + 1) * ns];
                for s in 0..ns {
                    for a in 0..game.joint().size() {
                        let target = game.reward(h, i, s, a) + game.expected_next(h, s, a, cont);
                        worst = worst.max((q.get(h, i, s, a) - target).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Base-`radix` increment; returns `false` once every digit has wrapped.
fn advance(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}
