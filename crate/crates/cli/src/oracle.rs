//! Naive unrolled-tree evaluator used as a reference for the exact DP in
//! `markov_oftrl::eval`.
//!
//! Everything here is recomputed from first principles: mixture weights from
//! the explicit product formula, stages from the length recurrence, joint
//! actions by full enumeration with every player's probability multiplied in,
//! and no memoisation. Only tiny games are feasible.

use markov_oftrl::{MarkovGame, PolicyTrajectory, ProductPolicy, QTable};
use markov_oftrl::policy::UtilityHistory;

/// How the certified policy at a node draws the next history index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexProcess {
    /// `j ≤ t` with probability `α_j Π_{k=j+1}^t (1 - α_k)`, continue at `j`.
    Smooth,
    /// Uniform over the previous stage; the first stage plays uniform.
    Staged,
}

/// `α_j Π_{k=j+1}^t (1 - α_k)` with `α_k = (H+1)/(H+k)`.
pub fn mixture_weight(t: usize, j: usize, horizon: usize) -> f64 {
    let a = |k: usize| (horizon as f64 + 1.0) / (horizon as f64 + k as f64);
    let mut w = a(j);
    for k in j + 1..=t {
        w *= 1.0 - a(k);
    }
    w
}

/// `(start, end)` of each stage covering `1..=total`, one-based inclusive.
pub fn stages(horizon: usize, total: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut start, mut len) = (1, horizon);
    while start <= total {
        out.push((start, (start + len - 1).min(total)));
        start += len;
        len += len / horizon;
    }
    out
}

struct Branch {
    prob: f64,
    /// `None` plays the uniform product policy.
    policy: Option<usize>,
    next: usize,
}

pub struct TreeOracle<'a> {
    game: &'a MarkovGame,
    trajectory: &'a PolicyTrajectory,
    process: IndexProcess,
    uniform: ProductPolicy,
    /// Stage table, used by [`IndexProcess::Staged`].
    stages: Vec<(usize, usize)>,
}

impl<'a> TreeOracle<'a> {
    pub fn new(game: &'a MarkovGame, trajectory: &'a PolicyTrajectory, process: IndexProcess) -> Self {
        Self {
            game,
            trajectory,
            process,
            uniform: ProductPolicy::uniform(game),
            stages: stages(game.horizon(), trajectory.len()),
        }
    }

    fn stage_of(&self, t: usize) -> usize {
        1 + self.stages.iter().position(|&(a, b)| a <= t && t <= b).expect("t within trajectory")
    }

    /// Root nodes and their weights for the output policy at `checkpoint`.
    pub fn roots(&self, checkpoint: usize) -> Vec<(f64, usize)> {
        match self.process {
            IndexProcess::Smooth => vec![(1.0, checkpoint)],
            IndexProcess::Staged => (1..=checkpoint)
                .map(|t| (1.0 / checkpoint as f64, self.stage_of(t)))
                .collect(),
        }
    }

    /// Root node of the single certified policy `π̄^t`.
    pub fn node_of(&self, t: usize) -> usize {
        match self.process {
            IndexProcess::Smooth => t,
            IndexProcess::Staged => self.stage_of(t),
        }
    }

    fn branches(&self, node: usize) -> Vec<Branch> {
        let horizon = self.game.horizon();
        match self.process {
            IndexProcess::Smooth => (1..=node)
                .map(|j| Branch {
                    prob: mixture_weight(node, j, horizon),
                    policy: Some(j),
                    next: j,
                })
                .collect(),
            IndexProcess::Staged if node == 1 => vec![Branch {
                prob: 1.0,
                policy: None,
                next: 1,
            }],
            IndexProcess::Staged => {
                let (start, end) = self.stages[node - 2];
                let len = (end + 1 - start) as f64;
                (start..=end)
                    .map(|j| Branch {
                        prob: 1.0 / len,
                        policy: Some(j),
                        next: node - 1,
                    })
                    .collect()
            }
        }
    }

    fn policy(&self, index: Option<usize>) -> &ProductPolicy {
        match index {
            Some(j) => self.trajectory.policy(j),
            None => &self.uniform,
        }
    }

    /// Probability of the joint action under `policy`, skipping `skip`.
    fn prob(&self, policy: &ProductPolicy, h: usize, s: usize, actions: &[usize], skip: Option<usize>) -> f64 {
        actions
            .iter()
            .enumerate()
            .filter(|&(k, _)| Some(k) != skip)
            .map(|(k, &a)| policy.get(h, s, k)[a])
            .product()
    }

    fn joint_actions(&self) -> Vec<Vec<usize>> {
        (0..self.game.joint().size()).map(|a| self.game.joint().decode(a)).collect()
    }

    fn step_value<F>(&self, h: usize, s: usize, player: usize, actions: &[usize], next: F) -> f64
    where
        F: Fn(usize) -> f64,
    {
        let flat = self.game.joint().encode(actions);
        let mut v = self.game.reward(h, player, s, flat);
        if h + 1 < self.game.horizon() {
            for (s2, &p) in self.game.transition(h, s, flat).iter().enumerate() {
                if p != 0.0 {
                    v += p * next(s2);
                }
            }
        }
        v
    }

    /// Value when `player` maps each recommendation through `deviate`.
    pub fn modified_value(
        &self,
        h: usize,
        s: usize,
        node: usize,
        player: usize,
        deviate: &dyn Fn(usize, usize, usize) -> usize,
    ) -> f64 {
        if h == self.game.horizon() {
            return 0.0;
        }
        let mut total = 0.0;
        for b in self.branches(node) {
            let policy = self.policy(b.policy);
            for actions in self.joint_actions() {
                let p = self.prob(policy, h, s, &actions, None);
                if p == 0.0 {
                    continue;
                }
                let mut played = actions.clone();
                played[player] = deviate(h, s, actions[player]);
                let v = self.step_value(h, s, player, &played, |s2| {
                    self.modified_value(h + 1, s2, b.next, player, deviate)
                });
                total += b.prob * p * v;
            }
        }
        total
    }

    pub fn follow_value(&self, h: usize, s: usize, node: usize, player: usize) -> f64 {
        self.modified_value(h, s, node, player, &|_, _, a| a)
    }

    /// Deviator knows index and recommendation, then picks the best action.
    pub fn informed_value(&self, h: usize, s: usize, node: usize, player: usize) -> f64 {
        if h == self.game.horizon() {
            return 0.0;
        }
        let n_own = self.game.action_count(player);
        let mut total = 0.0;
        for b in self.branches(node) {
            let policy = self.policy(b.policy);
            for rec in 0..n_own {
                let p_rec = policy.get(h, s, player)[rec];
                if p_rec == 0.0 {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for dev in 0..n_own {
                    let mut u = 0.0;
                    for actions in self.joint_actions().into_iter().filter(|a| a[player] == rec) {
                        let p = self.prob(policy, h, s, &actions, Some(player));
                        let mut played = actions.clone();
                        played[player] = dev;
                        u += p * self.step_value(h, s, player, &played, |s2| {
                            self.informed_value(h + 1, s2, b.next, player)
                        });
                    }
                    best = best.max(u);
                }
                total += b.prob * p_rec * best;
            }
        }
        total
    }

    /// Deviator picks an action against the mixture, then learns the index.
    pub fn deferred_value(&self, h: usize, s: usize, node: usize, player: usize) -> f64 {
        if h == self.game.horizon() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for dev in 0..self.game.action_count(player) {
            let mut u = 0.0;
            for b in self.branches(node) {
                let policy = self.policy(b.policy);
                for actions in self.joint_actions().into_iter().filter(|a| a[player] == dev) {
                    let p = self.prob(policy, h, s, &actions, Some(player));
                    u += b.prob * p * self.step_value(h, s, player, &actions, |s2| {
                        self.deferred_value(h + 1, s2, b.next, player)
                    });
                }
            }
            best = best.max(u);
        }
        best
    }

    /// Exact best response over history-dependent deviations, by recursion
    /// over observable histories with unnormalised beliefs over nodes.
    fn best_response(&self, h: usize, s: usize, belief: &[(f64, usize)], player: usize) -> f64 {
        if h == self.game.horizon() || belief.is_empty() {
            return 0.0;
        }
        let others: Vec<Vec<usize>> = self
            .joint_actions()
            .into_iter()
            .filter(|a| a[player] == 0)
            .collect();
        let mut best = f64::NEG_INFINITY;
        for dev in 0..self.game.action_count(player) {
            let mut value = 0.0;
            for template in &others {
                let mut actions = template.clone();
                actions[player] = dev;
                let flat = self.game.joint().encode(&actions);
                // Weight of observing these opponent actions, per hidden branch.
                let mut next_belief = Vec::new();
                for &(w, node) in belief {
                    for b in self.branches(node) {
                        let p = w * b.prob * self.prob(self.policy(b.policy), h, s, &actions, Some(player));
                        if p == 0.0 {
                            continue;
                        }
                        value += p * self.game.reward(h, player, s, flat);
                        next_belief.push((p, b.next));
                    }
                }
                if h + 1 < self.game.horizon() {
                    for (s2, &q) in self.game.transition(h, s, flat).iter().enumerate() {
                        if q == 0.0 {
                            continue;
                        }
                        let scaled: Vec<(f64, usize)> =
                            next_belief.iter().map(|&(w, n)| (w * q, n)).collect();
                        value += self.best_response(h + 1, s2, &scaled, player);
                    }
                }
            }
            best = best.max(value);
        }
        best
    }

    fn weighted(&self, roots: &[(f64, usize)], f: impl Fn(usize) -> f64) -> f64 {
        roots.iter().map(|&(w, node)| w * f(node)).sum()
    }

    pub fn certified_value(&self, player: usize, checkpoint: usize) -> f64 {
        let s1 = self.game.initial_state();
        self.weighted(&self.roots(checkpoint), |n| self.follow_value(0, s1, n, player))
    }

    pub fn informed_gap(&self, player: usize, checkpoint: usize) -> f64 {
        let s1 = self.game.initial_state();
        self.weighted(&self.roots(checkpoint), |n| self.informed_value(0, s1, n, player))
            - self.certified_value(player, checkpoint)
    }

    pub fn deferred_gap(&self, player: usize, checkpoint: usize) -> f64 {
        let s1 = self.game.initial_state();
        self.weighted(&self.roots(checkpoint), |n| self.deferred_value(0, s1, n, player))
            - self.certified_value(player, checkpoint)
    }

    /// Gap of the true best response that knows `t` but not the drawn indices,
    /// averaged over the output's `t`.
    pub fn per_t_best_response_gap(&self, player: usize, checkpoint: usize) -> f64 {
        let s1 = self.game.initial_state();
        self.weighted(&self.roots(checkpoint), |n| self.best_response(0, s1, &[(1.0, n)], player))
            - self.certified_value(player, checkpoint)
    }

    /// True CCE gap of the output policy: the deviator knows nothing but the
    /// observable history.
    pub fn true_cce_gap(&self, player: usize, checkpoint: usize) -> f64 {
        let s1 = self.game.initial_state();
        self.best_response(0, s1, &self.roots(checkpoint), player) - self.certified_value(player, checkpoint)
    }

    /// Max over every strategy modification `(h, s, a) → a'`, no pruning.
    pub fn ce_gap_exact(&self, player: usize, checkpoint: usize) -> f64 {
        let (horizon, ns, na) = (self.game.horizon(), self.game.num_states(), self.game.action_count(player));
        let digits = horizon * ns * na;
        let s1 = self.game.initial_state();
        let roots = self.roots(checkpoint);
        let mut phi = vec![0usize; digits];
        let mut best = f64::NEG_INFINITY;
        loop {
            let map = |h: usize, s: usize, a: usize| phi[(h * ns + s) * na + a];
            let v = self.weighted(&roots, |n| self.modified_value(0, s1, n, player, &map));
            best = best.max(v);
            if !odometer(&mut phi, na) {
                break;
            }
        }
        best - self.certified_value(player, checkpoint)
    }

    /// Max over every deterministic Markov deviation `(h, s) → a'`, no pruning.
    pub fn markov_gap(&self, player: usize, checkpoint: usize) -> f64 {
        let (horizon, ns, na) = (self.game.horizon(), self.game.num_states(), self.game.action_count(player));
        let s1 = self.game.initial_state();
        let roots = self.roots(checkpoint);
        let mut mu = vec![0usize; horizon * ns];
        let mut best = f64::NEG_INFINITY;
        loop {
            let map = |h: usize, s: usize, _a: usize| mu[h * ns + s];
            let v = self.weighted(&roots, |n| self.modified_value(0, s1, n, player, &map));
            best = best.max(v);
            if !odometer(&mut mu, na) {
                break;
            }
        }
        best - self.certified_value(player, checkpoint)
    }
}

fn odometer(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// Swap regret by enumerating every map `A_i → A_i`.
pub fn swap_regret(
    trajectory: &PolicyTrajectory,
    utilities: &UtilityHistory,
    horizon: usize,
    t: usize,
    h: usize,
    s: usize,
    player: usize,
) -> f64 {
    let na = trajectory.policy(1).get(h, s, player).len();
    let mut phi = vec![0usize; na];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut total = 0.0;
        for j in 1..=t {
            let pi = trajectory.policy(j).get(h, s, player);
            let u = utilities.get(j, h, s, player);
            let w = mixture_weight(t, j, horizon);
            for a in 0..na {
                total += w * pi[a] * (u[phi[a]] - u[a]);
            }
        }
        best = best.max(total);
        if !odometer(&mut phi, na) {
            break;
        }
    }
    best
}

/// Per-stage average external regret against `q`, by explicit joint enumeration.
pub fn stage_regret(
    game: &MarkovGame,
    trajectory: &PolicyTrajectory,
    q: &QTable,
    (start, end): (usize, usize),
    h: usize,
    s: usize,
    player: usize,
) -> f64 {
    let joint = game.joint();
    let mut best = f64::NEG_INFINITY;
    for dev in 0..game.action_count(player) {
        let mut total = 0.0;
        for j in start..=end {
            let pi = trajectory.policy(j);
            for flat in 0..joint.size() {
                let actions = joint.decode(flat);
                let p_all: f64 = (0..actions.len()).map(|k| pi.get(h, s, k)[actions[k]]).product();
                let p_others: f64 = (0..actions.len())
                    .filter(|&k| k != player)
                    .map(|k| pi.get(h, s, k)[actions[k]])
                    .product();
                if actions[player] == dev {
                    total += p_others * q.get(h, player, s, flat);
                }
                total -= p_all * q.get(h, player, s, flat);
            }
        }
        best = best.max(total / (end + 1 - start) as f64);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use markov_oftrl::game::toy_game;
    use markov_oftrl::schedules::{alpha_mix, StageSchedule};

    #[test]
    fn weights_match_library() {
        for t in 1..30 {
            let lib = alpha_mix(t, 2);
            for j in 1..=t {
                assert!((mixture_weight(t, j, 2) - lib[j - 1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stages_match_library() {
        for (h, total) in [(2, 10), (1, 20), (3, 100)] {
            let lib = StageSchedule::new(h, total);
            let ours: Vec<_> = lib.stages().iter().map(|s| (s.start, s.end)).collect();
            assert_eq!(stages(h, total), ours);
        }
    }

    #[test]
    fn uniform_toy_value() {
        let g = toy_game();
        let traj = PolicyTrajectory::from_policies(vec![ProductPolicy::uniform(&g)]);
        let o = TreeOracle::new(&g, &traj, IndexProcess::Smooth);
        assert!((o.certified_value(0, 1) - 1.0625).abs() < 1e-15);
        // One index: every notion of deviation coincides.
        let e = o.ce_gap_exact(0, 1);
        for other in [o.informed_gap(0, 1), o.markov_gap(0, 1), o.true_cce_gap(0, 1), o.deferred_gap(0, 1)] {
            assert!((e - other).abs() < 1e-12);
        }
    }
}
