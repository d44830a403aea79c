use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::policy::{full_info_utility, PolicyTrajectory, QTable, UtilityHistory};
use crate::schedules::{alpha, alpha_mix, StageSchedule};

/// `Σ_a max_{a'} R[a][a'] - R[a][a]` for a flattened `A × A` matrix.
fn best_modification(r: &[f64], a: usize) -> f64 {
    (0..a)
        .map(|rec| {
            let row = &r[rec * a..(rec + 1) * a];
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            best - row[rec]
        })
        .sum()
}

/// `SwapReg^t_{h,i}(s)` evaluated directly from the weights `α_t^j`.
///
/// The maximum over modifications decomposes per recommended action.
pub fn swap_regret(
    trajectory: &PolicyTrajectory,
    utilities: Option<&UtilityHistory>,
    t: usize,
    h: usize,
    s: usize,
    player: usize,
) -> Result<f64> {
    let utilities = utilities.ok_or(Error::MissingUtilities)?;
    if t == 0 {
        return Err(Error::ZeroIteration);
    }
    let available = trajectory.len().min(utilities.len());
    if t > available {
        return Err(Error::TrajectoryTooShort { requested: t, available });
    }
    let horizon = trajectory.policy(1).horizon();
    let a = trajectory.policy(1).get(h, s, player).len();
    let mut r = vec![0.0; a * a];
    for (j, w) in alpha_mix(t, horizon).into_iter().enumerate() {
        let pi = trajectory.policy(j + 1).get(h, s, player);
        let u = utilities.get(j + 1, h, s, player);
        for rec in 0..a {
            for dev in 0..a {
                r[rec * a + dev] += w * pi[rec] * u[dev];
            }
        }
    }
    Ok(best_modification(&r, a))
}

/// `max_{h,s} SwapReg^t_{h,i}(s)` at each checkpoint.
pub fn swap_regret_series(
    game: &MarkovGame,
    trajectory: &PolicyTrajectory,
    utilities: Option<&UtilityHistory>,
    player: usize,
    checkpoints: &[usize],
) -> Result<Vec<f64>> {
    Ok(swap_regret_tables(game, trajectory, utilities, player, checkpoints)?
        .into_iter()
        .map(|table| table.into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// `SwapReg^t_{h,i}(s)` for every `(h, s)` (flattened `h·S + s`) at each
/// checkpoint, in one pass using `R^t = (1 - α_t) R^{t-1} + α_t π^t ⊗ u^t`.
///
/// `checkpoints` must be increasing.
pub fn swap_regret_tables(
    game: &MarkovGame,
    trajectory: &PolicyTrajectory,
    utilities: Option<&UtilityHistory>,
    player: usize,
    checkpoints: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let utilities = utilities.ok_or(Error::MissingUtilities)?;
    let last = checkpoints.last().copied().unwrap_or(0);
    let available = trajectory.len().min(utilities.len());
    if last > available {
        return Err(Error::TrajectoryTooShort { requested: last, available });
    }
    if checkpoints.first() == Some(&0) {
        return Err(Error::ZeroIteration);
    }
    let (horizon, ns) = (game.horizon(), game.num_states());
    let a = game.action_count(player);
    let mut r = vec![0.0; horizon * ns * a * a];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for t in 1..=last {
        let w = alpha(t, horizon);
        let policy = trajectory.policy(t);
        for h in 0..horizon {
            for s in 0..ns {
                let pi = policy.get(h, s, player);
                let u = utilities.get(t, h, s, player);
                let block = &mut r[(h * ns + s) * a * a..(h * ns + s + 1) * a * a];
                for rec in 0..a {
                    for dev in 0..a {
                        let cell = &mut block[rec * a + dev];
                        *cell = (1.0 - w) * *cell + w * pi[rec] * u[dev];
                    }
                }
            }
        }
        while next.peek() == Some(&&t) {
            next.next();
            out.push(r.chunks(a * a).map(|block| best_modification(block, a)).collect());
        }
    }
    Ok(out)
}

/// `Reg^τ_{h,i}(s) = max_{a'} (1/L_τ) Σ_{j ∈ stage τ} (u^j(a') - ⟨π^j, u^j⟩)`
/// with `u^j = [Q^τ π^j_{-i}](s, ·)`. `stage` is one-based.
pub fn stage_avg_regret(
    game: &MarkovGame,
    trajectory: &PolicyTrajectory,
    schedule: &StageSchedule,
    q_stage: &QTable,
    stage: usize,
    h: usize,
    s: usize,
    player: usize,
) -> Result<f64> {
    let st = schedule.stage(stage);
    if !st.is_complete() {
        return Err(Error::IncompleteStage { stage });
    }
    if st.end > trajectory.len() {
        return Err(Error::TrajectoryTooShort {
            requested: st.end,
            available: trajectory.len(),
        });
    }
    let a = game.action_count(player);
    let mut gain = vec![0.0; a];
    for j in st.iterations() {
        let policy = trajectory.policy(j);
        let u = full_info_utility(game, q_stage, policy, h, s, player);
        let played: f64 = policy.get(h, s, player).iter().zip(&u).map(|(p, v)| p * v).sum();
        for (g, v) in gain.iter_mut().zip(&u) {
            *g += v - played;
        }
    }
    let best = gain.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(best / st.len() as f64)
}

/// `max_{h,s} Reg^τ_{h,i}(s)` for one-based stage `τ`.
pub fn stage_regret_max(
    game: &MarkovGame,
    trajectory: &PolicyTrajectory,
    schedule: &StageSchedule,
    q_stage: &QTable,
    stage: usize,
    player: usize,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for h in 0..game.horizon() {
        for s in 0..game.num_states() {
            let r = stage_avg_regret(game, trajectory, schedule, q_stage, stage, h, s, player)?;
            worst = worst.max(r);
        }
    }
    Ok(worst)
}
