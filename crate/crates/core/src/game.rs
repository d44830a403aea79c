//! Finite-horizon general-sum Markov games.
//!
//! Steps are zero-based in every API of this crate (`h` in `0..horizon`).
//! Reported violations and file formats use one-based steps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Tolerance on `|Σ_s' P(s' | h, s, a) - 1|`.
pub const TRANSITION_TOLERANCE: f64 = 1e-12;

/// Row-major indexing over the product of per-player action sets.
///
/// Player 0 is the most significant digit: the flat index of `(a_0, …, a_{N-1})`
/// is `Σ_i a_i · stride_i` with `stride_{N-1} = 1` and
/// `stride_i = stride_{i+1} · A_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointActionSpace {
    counts: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl JointActionSpace {
    pub fn new(counts: &[usize]) -> Self {
        let mut strides = vec![1; counts.len()];
        for i in (0..counts.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let size = counts.iter().product();
        Self {
            counts: counts.to_vec(),
            strides,
            size,
        }
    }

    /// Number of joint actions.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_players(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, player: usize) -> usize {
        self.counts[player]
    }

    pub fn stride(&self, player: usize) -> usize {
        self.strides[player]
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.counts.len());
        actions
            .iter()
            .zip(&self.strides)
            .map(|(a, stride)| a * stride)
            .sum()
    }

    pub fn decode(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.counts.len()];
        self.decode_into(flat, &mut out);
        out
    }

    pub fn decode_into(&self, flat: usize, out: &mut [usize]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = (flat / self.strides[i]) % self.counts[i];
        }
    }

    /// Action of `player` inside the joint action `flat`.
    pub fn component(&self, flat: usize, player: usize) -> usize {
        (flat / self.strides[player]) % self.counts[player]
    }

    /// Flat index after replacing the action of `player` with `action`.
    pub fn replace(&self, flat: usize, player: usize, action: usize) -> usize {
        let stride = self.strides[player];
        flat - self.component(flat, player) * stride + action * stride
    }
}

/// An N-player episodic Markov game with dense reward and transition tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    horizon: usize,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    initial_state: usize,
    joint: JointActionSpace,
    /// `[h][player][s][joint]`
    rewards: Vec<f64>,
    /// `[h][s][joint][s']`
    transitions: Vec<f64>,
}

/// A failed game invariant. Steps and players are reported one-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionSum {
        step: usize,
        state: usize,
        joint: usize,
        sum: f64,
    },
    NegativeProbability {
        step: usize,
        state: usize,
        joint: usize,
        next: usize,
        value: f64,
    },
    RewardOutOfRange {
        step: usize,
        player: usize,
        state: usize,
        joint: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionSum {
                step,
                state,
                joint,
                sum,
            } => write!(
                f,
                "transition row (h={step}, s={state}, a={joint}) sums to {sum}, expected 1"
            ),
            Violation::NegativeProbability {
                step,
                state,
                joint,
                next,
                value,
            } => write!(
                f,
                "transition (h={step}, s={state}, a={joint}) -> s'={next} has invalid probability {value}"
            ),
            Violation::RewardOutOfRange {
                step,
                player,
                state,
                joint,
                value,
            } => write!(
                f,
                "reward (h={step}, player={player}, s={state}, a={joint}) = {value} lies outside [0, 1]"
            ),
        }
    }
}

impl MarkovGame {
    /// A game with the given shape, all rewards zero and all transition rows
    /// empty (so it fails validation until every row is set).
    pub fn zeroed(
        horizon: usize,
        states: Vec<String>,
        actions: Vec<Vec<String>>,
        initial_state: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if actions.is_empty() || actions.iter().any(|a| a.is_empty()) || states.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if initial_state >= states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: initial_state,
            });
        }
        let counts: Vec<usize> = actions.iter().map(Vec::len).collect();
        let joint = JointActionSpace::new(&counts);
        let n = counts.len();
        let s = states.len();
        let rewards = vec![0.0; horizon * n * s * joint.size()];
        let transitions = vec![0.0; horizon * s * joint.size() * s];
        Ok(Self {
            horizon,
            states,
            actions,
            initial_state,
            joint,
            rewards,
            transitions,
        })
    }

    /// Shape-only constructor with generated names (`s0, s1, …` and `p{i}a{k}`).
    pub fn zeroed_with_counts(
        horizon: usize,
        num_states: usize,
        action_counts: &[usize],
    ) -> Result<Self> {
        let states = (0..num_states).map(|s| format!("s{s}")).collect();
        let actions = action_counts
            .iter()
            .enumerate()
            .map(|(i, &a)| (0..a).map(|k| format!("p{}a{k}", i + 1)).collect())
            .collect();
        Self::zeroed(horizon, states, actions, 0)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_players(&self) -> usize {
        self.actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[Vec<String>] {
        &self.actions
    }

    pub fn action_count(&self, player: usize) -> usize {
        self.joint.count(player)
    }

    pub fn max_action_count(&self) -> usize {
        self.joint.counts().iter().copied().max().unwrap_or(0)
    }

    pub fn joint(&self) -> &JointActionSpace {
        &self.joint
    }

    fn reward_index(&self, h: usize, player: usize, s: usize, joint: usize) -> usize {
        ((h * self.num_players() + player) * self.num_states() + s) * self.joint.size() + joint
    }

    fn transition_offset(&self, h: usize, s: usize, joint: usize) -> usize {
        ((h * self.num_states() + s) * self.joint.size() + joint) * self.num_states()
    }

    pub fn reward(&self, h: usize, player: usize, s: usize, joint: usize) -> f64 {
        self.rewards[self.reward_index(h, player, s, joint)]
    }

    /// Rewards of `player` at `(h, s)` over all joint actions.
    pub fn reward_row(&self, h: usize, player: usize, s: usize) -> &[f64] {
        let start = self.reward_index(h, player, s, 0);
        &self.rewards[start..start + self.joint.size()]
    }

    pub fn set_reward(&mut self, h: usize, player: usize, s: usize, joint: usize, value: f64) {
        let idx = self.reward_index(h, player, s, joint);
        self.rewards[idx] = value;
    }

    /// Next-state distribution `P_h(· | s, a)`.
    pub fn transition(&self, h: usize, s: usize, joint: usize) -> &[f64] {
        let start = self.transition_offset(h, s, joint);
        &self.transitions[start..start + self.num_states()]
    }

    pub fn set_transition(&mut self, h: usize, s: usize, joint: usize, row: &[f64]) {
        assert_eq!(row.len(), self.num_states());
        let start = self.transition_offset(h, s, joint);
        self.transitions[start..start + row.len()].copy_from_slice(row);
    }

    /// `[P_h V](s, a)`
    pub fn expected_next(&self, h: usize, s: usize, joint: usize, values: &[f64]) -> f64 {
        self.transition(h, s, joint)
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// All invariant violations; an empty list means the game is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ns = self.num_states();
        for h in 0..self.horizon {
            for s in 0..ns {
                for a in 0..self.joint.size() {
                    for player in 0..self.num_players() {
                        let r = self.reward(h, player, s, a);
                        if !(0.0..=1.0).contains(&r) {
                            out.push(Violation::RewardOutOfRange {
                                step: h + 1,
                                player: player + 1,
                                state: s,
                                joint: a,
                                value: r,
                            });
                        }
                    }
                    let row = self.transition(h, s, a);
                    for (next, &p) in row.iter().enumerate() {
                        if !(p >= 0.0 && p.is_finite()) {
                            out.push(Violation::NegativeProbability {
                                step: h + 1,
                                state: s,
                                joint: a,
                                next,
                                value: p,
                            });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if !((sum - 1.0).abs() <= TRANSITION_TOLERANCE) {
                        out.push(Violation::TransitionSum {
                            step: h + 1,
                            state: s,
                            joint: a,
                            sum,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// The two-player, two-state, two-step general-sum game used for the
/// convergence experiments.
///
/// Player 1 prefers matching actions, player 2 prefers mismatching ones.
/// Matching joint actions keep the state with probability 0.8, opposite ones
/// with probability 0.2. Both steps share the same tables.
pub fn toy_game() -> MarkovGame {
    let states = vec![String::from("s0"), String::from("s1")];
    let actions = vec![
        vec![String::from("a0"), String::from("a1")],
        vec![String::from("b0"), String::from("b1")],
    ];
    let mut game = MarkovGame::zeroed(2, states, actions, 0).expect("toy game shape is valid");

    // [state][a][b]
    const PLAYER1: [[[f64; 2]; 2]; 2] = [[[0.8, 0.2], [0.0, 1.0]], [[1.0, 0.2], [0.5, 0.8]]];
    const PLAYER2: [[[f64; 2]; 2]; 2] = [[[0.2, 1.0], [0.5, 0.0]], [[0.5, 1.0], [1.0, 0.2]]];

    for h in 0..2 {
        for s in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let joint = game.joint().encode(&[a, b]);
                    game.set_reward(h, 0, s, joint, PLAYER1[s][a][b]);
                    game.set_reward(h, 1, s, joint, PLAYER2[s][a][b]);
                    let (stay, leave) = if a == b { (0.8, 0.2) } else { (0.2, 0.8) };
                    let mut row = [0.0; 2];
                    row[s] = stay;
                    row[1 - s] = leave;
                    game.set_transition(h, s, joint, &row);
                }
            }
        }
    }
    game
}
