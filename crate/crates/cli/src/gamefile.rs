//! JSON game files.
//!
//! ```json
//! {
//!   "players": 2, "horizon": 2,
//!   "states": ["s0", "s1"],
//!   "actions": [["a0", "a1"], ["b0", "b1"]],
//!   "initial_state": "s0",
//!   "rewards": {"1": {"1": {"s0": [0.8, 0.2, 0.0, 1.0], ...}, ...}, ...},
//!   "transitions": {"1": {"s0": {"0": {"s0": 0.8, "s1": 0.2}, ...}, ...}, ...}
//! }
//! ```
//!
//! Steps and players are keyed one-based, joint actions by their zero-based
//! row-major flat index. States missing from a transition row have
//! probability zero. Nothing is normalised: rows outside tolerance are
//! rejected by validation.

use std::path::Path;

use indexmap::IndexMap;
use markov_oftrl::{MarkovGame, Violation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("cannot read game file: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed document; the message carries line and column.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    /// Well-formed document describing an inconsistent game.
    #[error("invalid game: {0}")]
    Invalid(String),
    #[error("invalid game: {}", join(.0))]
    Violations(Vec<Violation>),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

type Rewards = IndexMap<String, IndexMap<String, IndexMap<String, Vec<f64>>>>;
type Transitions = IndexMap<String, IndexMap<String, IndexMap<String, IndexMap<String, f64>>>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameDoc {
    players: usize,
    horizon: usize,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    initial_state: String,
    rewards: Rewards,
    transitions: Transitions,
}

fn invalid(msg: impl Into<String>) -> GameFileError {
    GameFileError::Invalid(msg.into())
}

fn lookup<'m, V>(map: &'m IndexMap<String, V>, key: &str, what: &str) -> Result<&'m V, GameFileError> {
    map.get(key).ok_or_else(|| invalid(format!("missing {what} {key:?}")))
}

fn check_keys<V>(map: &IndexMap<String, V>, allowed: &[String], what: &str) -> Result<(), GameFileError> {
    match map.keys().find(|k| !allowed.contains(k)) {
        Some(k) => Err(invalid(format!("unknown {what} {k:?}"))),
        None => Ok(()),
    }
}

fn one_based(n: usize) -> Vec<String> {
    (1..=n).map(|k| k.to_string()).collect()
}

pub fn load_game(text: &str) -> Result<MarkovGame, GameFileError> {
    let doc: GameDoc = serde_json::from_str(text)?;
    if doc.players != doc.actions.len() {
        return Err(invalid(format!(
            "\"players\" is {} but \"actions\" lists {} players",
            doc.players,
            doc.actions.len()
        )));
    }
    let initial = doc
        .states
        .iter()
        .position(|s| *s == doc.initial_state)
        .ok_or_else(|| invalid(format!("unknown initial state {:?}", doc.initial_state)))?;
    for (i, names) in doc.actions.iter().enumerate() {
        if names.is_empty() {
            return Err(invalid(format!("player {} has no actions", i + 1)));
        }
    }
    let mut game = MarkovGame::zeroed(doc.horizon, doc.states.clone(), doc.actions.clone(), initial)
        .map_err(|e| invalid(e.to_string()))?;
    let joint = game.joint().size();
    let steps = one_based(doc.horizon);
    let players = one_based(doc.players);
    let joint_keys: Vec<String> = (0..joint).map(|a| a.to_string()).collect();

    check_keys(&doc.rewards, &steps, "reward step")?;
    check_keys(&doc.transitions, &steps, "transition step")?;
    for (h, step) in steps.iter().enumerate() {
        let by_player = lookup(&doc.rewards, step, "reward step")?;
        check_keys(by_player, &players, "player")?;
        for (i, player) in players.iter().enumerate() {
            let by_state = lookup(by_player, player, "reward player")?;
            check_keys(by_state, &doc.states, "state")?;
            for (s, state) in doc.states.iter().enumerate() {
                let row = lookup(by_state, state, "reward state")?;
                if row.len() != joint {
                    return Err(invalid(format!(
                        "reward (h={step}, player={player}, s={state}) has {} entries, expected {joint}",
                        row.len()
                    )));
                }
                for (a, &r) in row.iter().enumerate() {
                    game.set_reward(h, i, s, a, r);
                }
            }
        }
        let by_state = lookup(&doc.transitions, step, "transition step")?;
        check_keys(by_state, &doc.states, "state")?;
        for (s, state) in doc.states.iter().enumerate() {
            let rows = lookup(by_state, state, "transition state")?;
            check_keys(rows, &joint_keys, "joint action")?;
            for (a, key) in joint_keys.iter().enumerate() {
                let entries = lookup(rows, key, "transition joint action")?;
                check_keys(entries, &doc.states, "next state")?;
                let row: Vec<f64> = doc
                    .states
                    .iter()
                    .map(|next| entries.get(next).copied().unwrap_or(0.0))
                    .collect();
                game.set_transition(h, s, a, &row);
            }
        }
    }
    let violations = game.validate();
    if violations.is_empty() {
        Ok(game)
    } else {
        Err(GameFileError::Violations(violations))
    }
}

pub fn save_game(game: &MarkovGame) -> String {
    let states = game.state_names();
    let mut rewards = Rewards::new();
    let mut transitions = Transitions::new();
    for h in 0..game.horizon() {
        let mut by_player = IndexMap::new();
        for i in 0..game.num_players() {
            let by_state = states
                .iter()
                .enumerate()
                .map(|(s, name)| (name.clone(), game.reward_row(h, i, s).to_vec()))
                .collect();
            by_player.insert((i + 1).to_string(), by_state);
        }
        rewards.insert((h + 1).to_string(), by_player);

        let mut by_state = IndexMap::new();
        for (s, name) in states.iter().enumerate() {
            let mut rows = IndexMap::new();
            for a in 0..game.joint().size() {
                let entries = game
                    .transition(h, s, a)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(next, &p)| (states[next].clone(), p))
                    .collect();
                rows.insert(a.to_string(), entries);
            }
            by_state.insert(name.clone(), rows);
        }
        transitions.insert((h + 1).to_string(), by_state);
    }
    let doc = GameDoc {
        players: game.num_players(),
        horizon: game.horizon(),
        states: states.to_vec(),
        actions: game.action_names().to_vec(),
        initial_state: states[game.initial_state()].clone(),
        rewards,
        transitions,
    };
    serde_json::to_string_pretty(&doc).expect("game documents always serialise")
}

pub fn read_game(path: &Path) -> Result<MarkovGame, GameFileError> {
    load_game(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use markov_oftrl::game::toy_game;

    #[test]
    fn toy_round_trip() {
        let g = toy_game();
        assert_eq!(load_game(&save_game(&g)).unwrap(), g);
    }

    #[test]
    fn missing_transitions_names_the_field() {
        let mut doc: serde_json::Value = serde_json::from_str(&save_game(&toy_game())).unwrap();
        doc.as_object_mut().unwrap().remove("transitions");
        let err = load_game(&doc.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, GameFileError::Parse(_)));
        assert!(msg.contains("transitions") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn malformed_json_has_position() {
        let err = load_game("{\"players\": 2,\n \"horizon\": }").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_row_is_a_validation_error() {
        let mut doc: serde_json::Value = serde_json::from_str(&save_game(&toy_game())).unwrap();
        doc["transitions"]["1"]["s0"]["0"]["s0"] = serde_json::json!(0.7);
        match load_game(&doc.to_string()).unwrap_err() {
            GameFileError::Violations(v) => {
                assert_eq!(v.len(), 1);
                assert!(matches!(v[0], Violation::TransitionSum { step: 1, state: 0, joint: 0, .. }));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn three_players_asymmetric() {
        let mut g = MarkovGame::zeroed_with_counts(1, 1, &[2, 3, 2]).unwrap();
        for a in 0..12 {
            g.set_transition(0, 0, a, &[1.0]);
            g.set_reward(0, 1, 0, a, a as f64 / 11.0);
        }
        let back = load_game(&save_game(&g)).unwrap();
        assert_eq!(back.joint().size(), 12);
        assert_eq!(back, g);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(&save_game(&toy_game())).unwrap();
        doc["rewards"]["3"] = doc["rewards"]["1"].clone();
        assert!(load_game(&doc.to_string()).unwrap_err().to_string().contains("unknown reward step"));
        let mut doc: serde_json::Value = serde_json::from_str(&save_game(&toy_game())).unwrap();
        doc["extra"] = serde_json::json!(1);
        assert!(matches!(load_game(&doc.to_string()), Err(GameFileError::Parse(_))));
    }
}
