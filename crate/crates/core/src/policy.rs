//! Product Markov policies, their trajectories, and Q-tables.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::{JointActionSpace, MarkovGame};

/// A product Markov policy: one distribution per `(h, s, player)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPolicy {
    horizon: usize,
    num_states: usize,
    /// Start of each player's block inside one `(h, s)` slot; last entry is the slot width.
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl ProductPolicy {
    pub fn uniform(game: &MarkovGame) -> Self {
        let counts = game.joint().counts();
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &c in counts {
            acc += c;
            offsets.push(acc);
        }
        let mut data = Vec::with_capacity(game.horizon() * game.num_states() * acc);
        for _ in 0..game.horizon() * game.num_states() {
            for &c in counts {
                data.extend(core::iter::repeat_n(1.0 / c as f64, c));
            }
        }
        Self {
            horizon: game.horizon(),
            num_states: game.num_states(),
            offsets,
            data,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_players(&self) -> usize {
        self.offsets.len() - 1
    }

    fn slot(&self, h: usize, s: usize) -> usize {
        (h * self.num_states + s) * self.offsets[self.num_players()]
    }

    /// `π_{h,i}(s, ·)`
    pub fn get(&self, h: usize, s: usize, player: usize) -> &[f64] {
        let base = self.slot(h, s);
        &self.data[base + self.offsets[player]..base + self.offsets[player + 1]]
    }

    pub fn get_mut(&mut self, h: usize, s: usize, player: usize) -> &mut [f64] {
        let base = self.slot(h, s);
        let (lo, hi) = (self.offsets[player], self.offsets[player + 1]);
        &mut self.data[base + lo..base + hi]
    }

    pub fn set(&mut self, h: usize, s: usize, player: usize, dist: &[f64]) {
        self.get_mut(h, s, player).copy_from_slice(dist);
    }

    /// All players' distributions at `(h, s)`.
    pub fn at(&self, h: usize, s: usize) -> Vec<&[f64]> {
        (0..self.num_players()).map(|i| self.get(h, s, i)).collect()
    }

    /// Probability of the joint action `flat` at `(h, s)`.
    pub fn joint_prob(&self, space: &JointActionSpace, h: usize, s: usize, flat: usize) -> f64 {
        (0..self.num_players())
            .map(|i| self.get(h, s, i)[space.component(flat, i)])
            .product()
    }

    /// `[Q π](s) = ⟨values, π_h(s, ·)⟩` for a row `values` over joint actions.
    pub fn expect(&self, space: &JointActionSpace, h: usize, s: usize, values: &[f64]) -> f64 {
        let dists = self.at(h, s);
        let mut digits = vec![0; space.num_players()];
        let mut total = 0.0;
        for (flat, &v) in values.iter().enumerate() {
            space.decode_into(flat, &mut digits);
            let p: f64 = digits.iter().zip(&dists).map(|(&a, d)| d[a]).product();
            total += p * v;
        }
        total
    }
}

/// `out[a'] = Σ_{a_{-i}} Π_{k≠i} π_k(a_k) · values[(a', a_{-i})]`.
///
/// With `values = Q_{h,i}(s, ·)` this is the full-information utility
/// `[Q_{h,i} π_{h,-i}](s, ·)` queried by player `i`.
pub fn opponent_expectation(
    space: &JointActionSpace,
    values: &[f64],
    dists: &[&[f64]],
    player: usize,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = space.num_players();
    let mut digits = vec![0usize; n];
    for (flat, &v) in values.iter().enumerate() {
        // Row-major increment of the digit vector.
        if flat > 0 {
            let mut k = n;
            while k > 0 {
                k -= 1;
                digits[k] += 1;
                if digits[k] < space.count(k) {
                    break;
                }
                digits[k] = 0;
            }
        }
        let mut w = 1.0;
        for (k, d) in dists.iter().enumerate() {
            if k != player {
                w *= d[digits[k]];
            }
        }
        out[digits[player]] += w * v;
    }
}

/// Full-information utility `[Q_{h,i} π_{h,-i}](s, ·)`.
pub fn full_info_utility(
    game: &MarkovGame,
    q: &QTable,
    policy: &ProductPolicy,
    h: usize,
    s: usize,
    player: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; game.action_count(player)];
    opponent_expectation(game.joint(), q.row(h, player, s), &policy.at(h, s), player, &mut out);
    out
}

/// Estimated Q-functions `Q_{h,i}(s, a)` for every step, player and state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    horizon: usize,
    num_players: usize,
    num_states: usize,
    joint: usize,
    data: Vec<f64>,
}

impl QTable {
    pub fn zeros(game: &MarkovGame) -> Self {
        let joint = game.joint().size();
        Self {
            horizon: game.horizon(),
            num_players: game.num_players(),
            num_states: game.num_states(),
            joint,
            data: vec![0.0; game.horizon() * game.num_players() * game.num_states() * joint],
        }
    }

    fn offset(&self, h: usize, player: usize, s: usize) -> usize {
        ((h * self.num_players + player) * self.num_states + s) * self.joint
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `Q_{h,i}(s, ·)` over joint actions.
    pub fn row(&self, h: usize, player: usize, s: usize) -> &[f64] {
        let o = self.offset(h, player, s);
        &self.data[o..o + self.joint]
    }

    pub fn row_mut(&mut self, h: usize, player: usize, s: usize) -> &mut [f64] {
        let o = self.offset(h, player, s);
        &mut self.data[o..o + self.joint]
    }

    pub fn get(&self, h: usize, player: usize, s: usize, joint: usize) -> f64 {
        self.data[self.offset(h, player, s) + joint]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Smallest and largest entry at step `h`.
    pub fn range_at(&self, h: usize) -> (f64, f64) {
        let start = self.offset(h, 0, 0);
        let len = self.num_players * self.num_states * self.joint;
        self.data[start..start + len]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Bellman target `r_{h,i} + P_h [Q_{h+1,i} π_{h+1}]` at step `h` for every
    /// `(i, s, a)`, with `Q_{H+1} ≡ 0`. Written into `out` laid out like one
    /// step of a [`QTable`].
    pub fn bellman_target(
        &self,
        game: &MarkovGame,
        next_policy: &ProductPolicy,
        h: usize,
        out: &mut [f64],
    ) {
        let ns = game.num_states();
        let nj = game.joint().size();
        let np = game.num_players();
        // V_{h+1,i}(s') = [Q_{h+1,i} π_{h+1}](s')
        let mut next = vec![0.0; np * ns];
        if h + 1 < game.horizon() {
            for i in 0..np {
                for sp in 0..ns {
                    next[i * ns + sp] =
                        next_policy.expect(game.joint(), h + 1, sp, self.row(h + 1, i, sp));
                }
            }
        }
        for i in 0..np {
            for s in 0..ns {
                for a in 0..nj {
                    out[(i * ns + s) * nj + a] = game.reward(h, i, s, a)
                        + game.expected_next(h, s, a, &next[i * ns..(i + 1) * ns]);
                }
            }
        }
    }

    pub fn step_mut(&mut self, h: usize) -> &mut [f64] {
        let start = self.offset(h, 0, 0);
        let len = self.num_players * self.num_states * self.joint;
        &mut self.data[start..start + len]
    }

    pub fn step(&self, h: usize) -> &[f64] {
        let start = self.offset(h, 0, 0);
        let len = self.num_players * self.num_states * self.joint;
        &self.data[start..start + len]
    }
}

/// Per-iteration product policies `π^1, …, π^T` recorded by a learner run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyTrajectory {
    policies: Vec<ProductPolicy>,
}

impl PolicyTrajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_policies(policies: Vec<ProductPolicy>) -> Self {
        Self { policies }
    }

    pub fn push(&mut self, policy: ProductPolicy) {
        self.policies.push(policy);
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// `π^t` for one-based `t`.
    pub fn policy(&self, t: usize) -> &ProductPolicy {
        &self.policies[t - 1]
    }

    pub fn try_policy(&self, t: usize) -> Result<&ProductPolicy> {
        if t == 0 {
            return Err(Error::ZeroIteration);
        }
        self.policies.get(t - 1).ok_or(Error::TrajectoryTooShort {
            requested: t,
            available: self.policies.len(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProductPolicy> {
        self.policies.iter()
    }
}

/// Utilities `u^t_{h,i}(s, ·) = [Q^t_{h,i} π^t_{h,-i}](s, ·)` observed by the
/// learners, recorded per iteration when diagnostics are requested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UtilityHistory {
    horizon: usize,
    num_states: usize,
    offsets: Vec<usize>,
    /// One block per iteration, laid out like a [`ProductPolicy`].
    data: Vec<f64>,
    len: usize,
}

impl UtilityHistory {
    pub fn new(game: &MarkovGame) -> Self {
        let template = ProductPolicy::uniform(game);
        Self {
            horizon: game.horizon(),
            num_states: game.num_states(),
            offsets: template.offsets,
            data: Vec::new(),
            len: 0,
        }
    }

    fn block(&self) -> usize {
        self.horizon * self.num_states * self.offsets[self.offsets.len() - 1]
    }

    /// Append one iteration; `block` is laid out like a [`ProductPolicy`].
    pub fn push_block(&mut self, block: &[f64]) {
        debug_assert_eq!(block.len(), self.block());
        self.data.extend_from_slice(block);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `u^t_{h,i}(s, ·)` for one-based `t`.
    pub fn get(&self, t: usize, h: usize, s: usize, player: usize) -> &[f64] {
        let width = self.offsets[self.offsets.len() - 1];
        let base = (t - 1) * self.block() + (h * self.num_states + s) * width;
        &self.data[base + self.offsets[player]..base + self.offsets[player + 1]]
    }
}

impl ProductPolicy {
    /// Raw storage in `(h, s, player, action)` order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Zeroed buffer with the same layout, for utilities.
    pub(crate) fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub(crate) fn slot_range(&self, h: usize, s: usize, player: usize) -> core::ops::Range<usize> {
        let base = self.slot(h, s);
        base + self.offsets[player]..base + self.offsets[player + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::toy_game;

    #[test]
    fn zero_q_gives_zero_utility() {
        let g = toy_game();
        let q = QTable::zeros(&g);
        let pi = ProductPolicy::uniform(&g);
        assert_eq!(full_info_utility(&g, &q, &pi, 0, 1, 0), vec![0.0, 0.0]);
    }

    #[test]
    fn utility_against_uniform_and_point_mass() {
        let g = toy_game();
        let space = g.joint();
        // Q(s, a, b) = [[1, 0], [0, 1]]
        let values = [1.0, 0.0, 0.0, 1.0];
        let mine = [0.5, 0.5];
        let opp = [0.5, 0.5];
        let mut out = [0.0; 2];
        opponent_expectation(space, &values, &[&mine, &opp], 0, &mut out);
        assert_eq!(out, [0.5, 0.5]);
        let point = [1.0, 0.0];
        opponent_expectation(space, &values, &[&mine, &point], 0, &mut out);
        assert_eq!(out, [1.0, 0.0]);
        // Player 2's view of the same row: column player.
        let skew = [0.0, 2.0, 3.0, 0.0];
        opponent_expectation(space, &skew, &[&point, &opp], 1, &mut out);
        assert_eq!(out, [0.0, 2.0]);
    }

    #[test]
    fn opponent_expectation_three_players() {
        let space = JointActionSpace::new(&[2, 3, 2]);
        let values: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let d0 = [0.25, 0.75];
        let d1 = [0.2, 0.3, 0.5];
        let d2 = [0.6, 0.4];
        let mut out = [0.0; 3];
        opponent_expectation(&space, &values, &[&d0, &d1, &d2], 1, &mut out);
        for (b, o) in out.iter().enumerate() {
            let mut e = 0.0;
            for a in 0..2 {
                for c in 0..2 {
                    e += d0[a] * d2[c] * values[space.encode(&[a, b, c])];
                }
            }
            assert!((o - e).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_joint_expectation() {
        let g = toy_game();
        let pi = ProductPolicy::uniform(&g);
        let r = g.reward_row(0, 0, 0);
        assert!((pi.expect(g.joint(), 0, 0, r) - 0.5).abs() < 1e-15);
        assert!((pi.joint_prob(g.joint(), 1, 1, 3) - 0.25).abs() < 1e-15);
    }
}
