use alloc::vec::Vec;

use super::{Certification, Evaluator};
use crate::error::{Error, Result};

/// Which gap a run is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    Ce,
    Cce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub kind: EquilibriumKind,
    /// Attempt the Markov-deviation lower bound.
    pub lower: bool,
}

impl EvalOptions {
    pub fn new(kind: EquilibriumKind) -> Self {
        Self { kind, lower: true }
    }
}

/// Gaps of one player at one checkpoint. `None` marks a quantity that was not
/// requested or exceeded the enumeration guard.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerGaps {
    pub value: f64,
    pub exact: Option<f64>,
    /// Tightest available upper bound: the informed bound under smooth
    /// certification, the exact per-`t` best-response gap under staged.
    pub upper: f64,
    /// Index-aware informed bound.
    pub informed: f64,
    pub lower: Option<f64>,
    pub swap_regret: Option<f64>,
    pub stage_regret: Option<f64>,
}

impl PlayerGaps {
    /// Exact CE gap when available, otherwise the upper bound.
    pub fn reported(&self, kind: EquilibriumKind) -> f64 {
        match kind {
            EquilibriumKind::Ce => self.exact.unwrap_or(self.upper),
            EquilibriumKind::Cce => self.upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub checkpoint: usize,
    pub kind: EquilibriumKind,
    pub players: Vec<PlayerGaps>,
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn max_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut out: Option<f64> = None;
    for v in values {
        let v = v?;
        out = Some(out.map_or(v, |o| o.max(v)));
    }
    out
}

impl GapReport {
    pub fn max_upper(&self) -> f64 {
        max_of(self.players.iter().map(|p| p.upper))
    }

    pub fn max_exact(&self) -> Option<f64> {
        max_opt(self.players.iter().map(|p| p.exact))
    }

    pub fn max_lower(&self) -> Option<f64> {
        max_opt(self.players.iter().map(|p| p.lower))
    }

    pub fn max_swap_regret(&self) -> Option<f64> {
        max_opt(self.players.iter().map(|p| p.swap_regret))
    }

    pub fn max_stage_regret(&self) -> Option<f64> {
        max_opt(self.players.iter().map(|p| p.stage_regret))
    }

    /// The headline gap: max over players of [`PlayerGaps::reported`].
    pub fn reported(&self) -> f64 {
        max_of(self.players.iter().map(|p| p.reported(self.kind)))
    }
}

/// Values and gaps of every player at every checkpoint.
///
/// The exact CE gap is attempted only for [`EquilibriumKind::Ce`]; a tripped
/// enumeration guard leaves it (or the lower bound) as `None`.
pub fn evaluate(evaluator: &Evaluator<'_>, options: EvalOptions, checkpoints: &[usize]) -> Result<Vec<GapReport>> {
    let n = evaluator.game().num_players();
    let mut per_player = Vec::with_capacity(n);
    for i in 0..n {
        let value = evaluator.certified_value(i, checkpoints)?;
        let informed = evaluator.informed_gap(i, checkpoints)?;
        let upper = match evaluator.certification() {
            Certification::Smooth => informed.clone(),
            Certification::Staged(_) => evaluator.best_response_gap(i, checkpoints)?,
        };
        let exact = match options.kind {
            EquilibriumKind::Ce => guarded(evaluator.ce_gap_exact(i, checkpoints))?,
            EquilibriumKind::Cce => None,
        };
        let lower = if options.lower {
            guarded(evaluator.markov_lower_bound(i, checkpoints))?
        } else {
            None
        };
        per_player.push((value, upper, informed, exact, lower));
    }
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(k, &t)| GapReport {
            checkpoint: t,
            kind: options.kind,
            players: per_player
                .iter()
                .map(|(value, upper, informed, exact, lower)| PlayerGaps {
                    value: value[k],
                    exact: exact.as_ref().map(|e| e[k]),
                    upper: upper[k],
                    informed: informed[k],
                    lower: lower.as_ref().map(|l| l[k]),
                    swap_regret: None,
                    stage_regret: None,
                })
                .collect(),
        })
        .collect())
}

fn guarded(result: Result<Vec<f64>>) -> Result<Option<Vec<f64>>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::EnumerationGuard { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}
