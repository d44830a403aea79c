//! Step sizes and stage schedules.
//!
//! Iterations are one-based throughout: `t ∈ 1..=T`.

use alloc::vec;
use alloc::vec::Vec;

/// Smooth step size `α_t = (H+1)/(H+t)`.
pub fn alpha(t: usize, horizon: usize) -> f64 {
    debug_assert!(t >= 1);
    (horizon as f64 + 1.0) / (horizon as f64 + t as f64)
}

/// Mixture coefficients `[α_t^1, …, α_t^t]` with `α_t^j = α_j Π_{j<j'≤t} (1 - α_{j'})`.
///
/// Built from the recurrence `α_t^t = α_t`, `α_t^j = α_{t-1}^j (1 - α_t)`.
pub fn alpha_mix(t: usize, horizon: usize) -> Vec<f64> {
    let mut mix = Vec::with_capacity(t);
    for k in 1..=t {
        let a = alpha(k, horizon);
        for m in mix.iter_mut() {
            *m *= 1.0 - a;
        }
        mix.push(a);
    }
    mix
}

/// OFTRL weight `w_j = α_t^j / α_t^1`, which does not depend on `t ≥ j`.
///
/// Grows like `j^H`; learners use [`weight_ratio`] instead.
pub fn oftrl_weight(j: usize, horizon: usize) -> f64 {
    let h = horizon as f64;
    (2..=j).fold(1.0, |w, k| w * (h + k as f64 - 1.0) / (k as f64 - 1.0))
}

/// `w_{t-1} / w_t = (t-1)/(H+t-1)`; zero at `t = 1`.
///
/// Rescales a normalized accumulator `Σ_{j<t} w_j z_j / w_{t-1}` to `/ w_t`.
pub fn weight_ratio(t: usize, horizon: usize) -> f64 {
    debug_assert!(t >= 1);
    (t as f64 - 1.0) / (horizon as f64 + t as f64 - 1.0)
}

/// One stage of the stage-based value update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    /// One-based stage index τ.
    pub index: usize,
    /// First iteration of the stage.
    pub start: usize,
    /// Last iteration of the stage (truncated at `T` for the final stage).
    pub end: usize,
    /// Scheduled length `L_τ`.
    pub planned_len: usize,
}

impl Stage {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether the stage ran for its full scheduled length.
    pub fn is_complete(&self) -> bool {
        self.len() == self.planned_len
    }

    pub fn iterations(&self) -> core::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Stage lengths `L_1 = H`, `L_{τ+1} = ⌊(1 + 1/H) L_τ⌋`, covering `1..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSchedule {
    horizon: usize,
    total: usize,
    stages: Vec<Stage>,
}

/// Next stage length `⌊(1 + 1/H) L⌋`, computed in integers.
pub fn next_stage_len(len: usize, horizon: usize) -> usize {
    len + len / horizon
}

impl StageSchedule {
    pub fn new(horizon: usize, total: usize) -> Self {
        assert!(horizon >= 1 && total >= 1);
        let mut stages = Vec::new();
        let mut start = 1;
        let mut len = horizon;
        while start <= total {
            let end = (start + len - 1).min(total);
            stages.push(Stage {
                index: stages.len() + 1,
                start,
                end,
                planned_len: len,
            });
            start += len;
            len = next_stage_len(len, horizon);
        }
        Self {
            horizon,
            total,
            stages,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Stage by one-based index.
    pub fn stage(&self, index: usize) -> &Stage {
        &self.stages[index - 1]
    }

    /// One-based stage index `τ(t)`.
    pub fn stage_of(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.total);
        self.stages.partition_point(|st| st.end < t) + 1
    }

    /// Number of stages that ran to their scheduled length.
    pub fn completed(&self) -> usize {
        self.stages.iter().filter(|s| s.is_complete()).count()
    }

    /// Map `t ↦ τ(t)` for `t ∈ 1..=T` (index 0 unused).
    pub fn stage_map(&self) -> Vec<usize> {
        let mut map = vec![0; self.total + 1];
        for st in &self.stages {
            for t in st.iterations() {
                map[t] = st.index;
            }
        }
        map
    }
}

/// Upper bound `⌈H ln T / ln(e/2)⌉ + 1` on the number of stages.
pub fn stage_count_bound(horizon: usize, total: usize) -> usize {
    let ln_half_e = 1.0 - core::f64::consts::LN_2;
    libm::ceil(horizon as f64 * libm::log(total as f64) / ln_half_e) as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_mixture_is_one() {
        for h in 1..6 {
            assert_eq!(alpha_mix(1, h), vec![1.0]);
            assert_eq!(alpha(1, h), 1.0);
        }
    }

    #[test]
    fn second_mixture_h1() {
        let mix = alpha_mix(2, 1);
        assert!((mix[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((mix[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn third_mixture_h1_matches_product_formula() {
        // α_2 = 2/3, α_3 = 1/2.
        let mix = alpha_mix(3, 1);
        let expected = [1.0 * (1.0 / 3.0) * 0.5, (2.0 / 3.0) * 0.5, 0.5];
        for (m, e) in mix.iter().zip(expected) {
            assert!((m - e).abs() < 1e-15);
        }
        assert!((mix.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights() {
        assert_eq!(oftrl_weight(1, 7), 1.0);
        assert_eq!(oftrl_weight(2, 1), 2.0);
        assert_eq!(oftrl_weight(3, 2), 6.0);
        let mix = alpha_mix(2, 1);
        assert!((mix[1] / mix[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weight_ratio_matches_weights() {
        for h in 1..5 {
            for t in 2..40 {
                let r = oftrl_weight(t - 1, h) / oftrl_weight(t, h);
                assert!((weight_ratio(t, h) - r).abs() < 1e-14 * r.max(1.0));
            }
            assert_eq!(weight_ratio(1, h), 0.0);
        }
    }

    #[test]
    fn mixture_sums_to_one_incrementally() {
        // The incremental form Σ_j α_t^j = (1-α_t) Σ_j α_{t-1}^j + α_t,
        // checked on the full grid without materializing every profile.
        for h in [1usize, 2, 3, 5, 10] {
            let mut sum = 0.0;
            for t in 1..=100_000 {
                let a = alpha(t, h);
                sum = sum * (1.0 - a) + a;
                assert!((sum - 1.0).abs() < 1e-10, "t={t} h={h}");
            }
        }
    }

    #[test]
    fn materialized_mixture_sums_to_one() {
        for h in [1usize, 2, 3, 5, 10] {
            for t in [1usize, 2, 3, 10, 100, 1000] {
                let sum: f64 = alpha_mix(t, h).iter().sum();
                assert!((sum - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn first_coefficient_at_most_inverse_t() {
        for h in [1usize, 2, 3, 5, 10] {
            for t in 1..=500 {
                let mix = alpha_mix(t, h);
                assert!(mix[0] <= 1.0 / t as f64 + 1e-15);
                assert!(mix.iter().all(|&m| m >= 0.0));
            }
        }
    }

    #[test]
    fn stage_lengths() {
        let s = StageSchedule::new(2, 1000);
        let lens: Vec<_> = s.stages().iter().take(5).map(|st| st.planned_len).collect();
        assert_eq!(lens, [2, 3, 4, 6, 9]);
        let s = StageSchedule::new(1, 1000);
        let lens: Vec<_> = s.stages().iter().take(4).map(|st| st.planned_len).collect();
        assert_eq!(lens, [1, 2, 4, 8]);
    }

    #[test]
    fn stage_boundaries_h2_t10() {
        let s = StageSchedule::new(2, 10);
        let b: Vec<_> = s.stages().iter().map(|st| (st.start, st.end)).collect();
        assert_eq!(b, [(1, 2), (3, 5), (6, 9), (10, 10)]);
        assert_eq!(s.completed(), 3);
        assert!(!s.stage(4).is_complete());
        assert_eq!(s.stage_of(1), 1);
        assert_eq!(s.stage_of(5), 2);
        assert_eq!(s.stage_of(6), 3);
        assert_eq!(s.stage_of(10), 4);
    }

    #[test]
    fn stage_count_bound_holds_on_grid() {
        for h in 1..=10 {
            for t in (1..=4096).chain([10_000, 65_536, 1 << 20]) {
                let s = StageSchedule::new(h, t);
                assert!(s.num_stages() <= stage_count_bound(h, t), "h={h} t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn weight_ratio_is_t_independent(h in 1usize..=6, t in 1usize..=2000, frac in 0.0f64..1.0) {
            let j = 1 + ((t - 1) as f64 * frac) as usize;
            let mix = alpha_mix(t, h);
            let w = oftrl_weight(j, h);
            let ratio = mix[j - 1] / mix[0];
            // Both sides overflow together for very large j^H; skip those.
            prop_assume!(w.is_finite() && ratio.is_finite() && mix[0] > 1e-290);
            prop_assert!(((w - ratio) / w).abs() < 1e-9, "w={} ratio={}", w, ratio);
        }

        #[test]
        fn stages_partition(h in 1usize..=6, t in 1usize..=5000) {
            let s = StageSchedule::new(h, t);
            let mut next = 1;
            let mut prev_len = 0;
            for st in s.stages() {
                prop_assert_eq!(st.start, next);
                prop_assert!(st.planned_len >= prev_len + 1);
                next = st.end + 1;
                prev_len = st.planned_len;
            }
            prop_assert_eq!(next, t + 1);
            let map = s.stage_map();
            prop_assert!(map[1..].windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(s.stage_of(t), s.num_stages());
            for st in &s.stages()[..s.num_stages() - 1] {
                prop_assert!(st.is_complete());
            }
        }
    }
}
