//! Numerical kernels over probability simplices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Target for `|Σ_a 1/(λ - η̃ g_a) - 1|` in [`logbarrier_solve`].
pub const LOGBARRIER_TOLERANCE: f64 = 1e-13;
const LOGBARRIER_MAX_ITERATIONS: usize = 200;
/// Row-sum tolerance accepted by [`RowStochasticMatrix::new`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Maximizer of `η̃⟨x, g⟩ + Σ_a log x_a` together with its dual multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBarrierSolution {
    pub point: Vec<f64>,
    /// `λ` with `x_a = 1 / (λ - η̃ g_a)`.
    pub multiplier: f64,
    /// `|Σ_a 1/(λ - η̃ g_a) - 1|` at the returned multiplier.
    pub residual: f64,
    pub iterations: usize,
}

fn check_finite(g: &[f64], scale: f64) -> Result<()> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::InvalidLearningRate(scale));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Log-barrier OFTRL step: `argmax_{x ∈ Δ} η̃⟨x, g⟩ + Σ_a log x_a`.
pub fn logbarrier_argmax(g: &[f64], scale: f64) -> Result<Vec<f64>> {
    logbarrier_solve(g, scale).map(|sol| sol.point)
}

/// Solves the log-barrier step through its one-dimensional dual.
///
/// The optimum is `x_a = 1/(λ - η̃ g_a)` where `λ` is the root of the convex,
/// decreasing `f(λ) = Σ_a 1/(λ - η̃ g_a) - 1`. With `c = η̃ max g` the root lies
/// in `[c + 1, c + A]`. Newton started at the left end converges monotonically;
/// a bisection bracket guards against round-off.
pub fn logbarrier_solve(g: &[f64], scale: f64) -> Result<LogBarrierSolution> {
    check_finite(g, scale)?;
    let n = g.len();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Shift so that every b_a ≤ 0 and the root μ = λ - c lies in [1, n].
    let shifted: Vec<f64> = g.iter().map(|&v| scale * (v - top)).collect();

    let eval = |mu: f64| -> (f64, f64) {
        let mut f = -1.0;
        let mut df = 0.0;
        for &b in &shifted {
            let inv = 1.0 / (mu - b);
            f += inv;
            df -= inv * inv;
        }
        (f, df)
    };

    let (mut lo, mut hi) = (1.0, n as f64);
    let mut mu = 1.0;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < LOGBARRIER_MAX_ITERATIONS {
        iterations += 1;
        let (f, df) = eval(mu);
        residual = f.abs();
        if residual < LOGBARRIER_TOLERANCE {
            break;
        }
        if f > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let newton = mu - f / df;
        mu = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            let (f, _) = eval(mu);
            residual = f.abs();
            break;
        }
    }
    if residual >= LOGBARRIER_TOLERANCE * 10.0 {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }

    let mut point: Vec<f64> = shifted.iter().map(|&b| 1.0 / (mu - b)).collect();
    let sum: f64 = point.iter().sum();
    for x in point.iter_mut() {
        *x /= sum;
    }
    Ok(LogBarrierSolution {
        point,
        multiplier: mu + scale * top,
        residual,
        iterations,
    })
}

/// Entropy-regularized OFTRL step (optimistic Hedge): `x_a ∝ exp(η̃ g_a)`.
pub fn hedge_argmax(g: &[f64], scale: f64) -> Result<Vec<f64>> {
    check_finite(g, scale)?;
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = g.iter().map(|&v| libm::exp(scale * (v - top))).collect();
    let sum: f64 = out.iter().sum();
    for x in out.iter_mut() {
        *x /= sum;
    }
    Ok(out)
}

/// A square matrix whose rows are probability distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStochasticMatrix {
    dim: usize,
    /// Row-major.
    entries: Vec<f64>,
}

impl RowStochasticMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        for (row, chunk) in entries.chunks(dim.max(1)).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
                || !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE)
            {
                return Err(Error::NotRowStochastic { row, sum });
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.dim..(r + 1) * self.dim]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.dim + c]
    }

    /// `‖qᵀπ - π‖_∞`
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        (0..self.dim)
            .map(|c| {
                let mixed: f64 = (0..self.dim).map(|r| pi[r] * self.get(r, c)).sum();
                (mixed - pi[c]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A distribution `π` with `qᵀπ = π`.
///
/// Takes the minimum-norm solution `d` of `B d = c` with `B = [qᵀ - I; 1ᵀ]`
/// and `c = [-(qᵀ - I)u; 0]`, where `u` is uniform, and returns `u + d`. When the
/// stationary set is not a singleton this is its point closest to uniform.
pub fn stationary_distribution(q: &RowStochasticMatrix) -> Vec<f64> {
    let n = q.dim();
    if n == 1 {
        return vec![1.0];
    }
    let rows = n + 1;
    // B, row-major (n+1) x n.
    let mut b = vec![0.0; rows * n];
    for r in 0..n {
        for c in 0..n {
            b[r * n + c] = q.get(c, r) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        b[n * n + c] = 1.0;
    }
    let uniform = 1.0 / n as f64;
    let mut pi = vec![uniform; n];

    // One pass plus one refinement step on the residual.
    for _ in 0..2 {
        let mut rhs = vec![0.0; rows];
        for r in 0..rows {
            let target = if r == n { 1.0 } else { 0.0 };
            let applied: f64 = (0..n).map(|c| b[r * n + c] * pi[c]).sum();
            rhs[r] = target - applied;
        }
        let correction = min_norm_solve(&b, rows, n, &rhs);
        for (p, d) in pi.iter_mut().zip(&correction) {
            *p += d;
        }
    }

    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let sum: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= sum;
    }
    pi
}

/// Minimum-norm solution of a consistent system `B d = c` (`B` is `rows x cols`)
/// as `d = Bᵀ y` with `(B Bᵀ) y = c`. Every solution `y` gives the same `d`.
fn min_norm_solve(b: &[f64], rows: usize, cols: usize, rhs: &[f64]) -> Vec<f64> {
    let mut gram = vec![0.0; rows * rows];
    for i in 0..rows {
        for j in 0..rows {
            gram[i * rows + j] = (0..cols).map(|k| b[i * cols + k] * b[j * cols + k]).sum();
        }
    }
    let y = solve_symmetric_consistent(&mut gram, rows, rhs);
    (0..cols)
        .map(|k| (0..rows).map(|i| b[i * cols + k] * y[i]).sum())
        .collect()
}

/// Gaussian elimination with full pivoting; pivots below a relative tolerance
/// are treated as zero and their free variables set to zero.
fn solve_symmetric_consistent(m: &mut [f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut rhs = rhs.to_vec();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = scale * 1e-13;
    let mut rank = 0;
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for r in k..n {
            for c in k..n {
                let v = m[r * n + c].abs();
                if v > best {
                    best = v;
                    pr = r;
                    pc = c;
                }
            }
        }
        if best <= tol {
            break;
        }
        if pr != k {
            for c in 0..n {
                m.swap(k * n + c, pr * n + c);
            }
            rhs.swap(k, pr);
        }
        if pc != k {
            for r in 0..n {
                m.swap(r * n + k, r * n + pc);
            }
            col_perm.swap(k, pc);
        }
        let pivot = m[k * n + k];
        for r in (k + 1)..n {
            let factor = m[r * n + k] / pivot;
            if factor != 0.0 {
                for c in k..n {
                    m[r * n + c] -= factor * m[k * n + c];
                }
                rhs[r] -= factor * rhs[k];
            }
        }
        rank += 1;
    }
    let mut z = vec![0.0; n];
    for k in (0..rank).rev() {
        let mut acc = rhs[k];
        for c in (k + 1)..rank {
            acc -= m[k * n + c] * z[c];
        }
        z[k] = acc / m[k * n + k];
    }
    let mut y = vec![0.0; n];
    for (k, &orig) in col_perm.iter().enumerate() {
        y[orig] = z[k];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn logbarrier_zero_utilities_uniform() {
        assert!(close(&logbarrier_argmax(&[0.0, 0.0], 1.0).unwrap(), &[0.5, 0.5], 1e-15));
        let x = logbarrier_argmax(&[3.5; 5], 0.37).unwrap();
        assert!(close(&x, &[0.2; 5], 1e-15));
    }

    #[test]
    fn logbarrier_golden_ratio() {
        let sol = logbarrier_solve(&[1.0, 0.0], 1.0).unwrap();
        let sqrt5 = libm::sqrt(5.0);
        assert!((sol.multiplier - (3.0 + sqrt5) / 2.0).abs() < 1e-12);
        let phi_inv = (sqrt5 - 1.0) / 2.0;
        assert!(close(&sol.point, &[phi_inv, 1.0 - phi_inv], 1e-12));
    }

    #[test]
    fn logbarrier_rejects_bad_input() {
        assert_eq!(logbarrier_argmax(&[f64::NAN, 0.0], 1.0), Err(Error::NonFinite));
        assert!(matches!(
            logbarrier_argmax(&[0.0, 0.0], 0.0),
            Err(Error::InvalidLearningRate(_))
        ));
    }

    #[test]
    fn logbarrier_large_utilities_stay_interior() {
        let x = logbarrier_argmax(&[4000.0, 0.0, -3.0], 0.2).unwrap();
        assert!(x.iter().all(|&v| v > 0.0));
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x[0] > 0.99);
    }

    #[test]
    fn logbarrier_kkt_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.gen_range(1..=8);
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let eta = rng.gen_range(0.001..5.0);
            let sol = logbarrier_solve(&g, eta).unwrap();
            let kkt: f64 = g.iter().map(|&v| 1.0 / (sol.multiplier - eta * v)).sum();
            assert!((kkt - 1.0).abs() < 1e-12);
            assert!(sol.point.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn hedge_cases() {
        assert!(close(&hedge_argmax(&[0.0; 3], 2.0).unwrap(), &[1.0 / 3.0; 3], 1e-15));
        let x = hedge_argmax(&[core::f64::consts::LN_2, 0.0], 1.0).unwrap();
        assert!(close(&x, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let a = hedge_argmax(&[0.3, -1.2, 2.0], 0.7).unwrap();
        let b = hedge_argmax(&[100.3, 98.8, 102.0], 0.7).unwrap();
        assert!(close(&a, &b, 1e-12));
    }

    #[test]
    fn hedge_matches_direct_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let eta = rng.gen_range(0.01..1.0);
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let direct: Vec<f64> = g.iter().map(|&v| libm::exp(eta * v)).collect();
            let z: f64 = direct.iter().sum();
            let direct: Vec<f64> = direct.iter().map(|v| v / z).collect();
            assert!(close(&hedge_argmax(&g, eta).unwrap(), &direct, 1e-12));
        }
    }

    #[test]
    fn stationary_examples() {
        let id = RowStochasticMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(close(&stationary_distribution(&id), &[0.5, 0.5], 1e-14));
        let q = RowStochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        assert!(close(&stationary_distribution(&q), &[1.0 / 3.0, 2.0 / 3.0], 1e-14));
        let swap = RowStochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(close(&stationary_distribution(&swap), &[0.5, 0.5], 1e-14));
    }

    #[test]
    fn stationary_reducible_ties_to_uniform() {
        // Two closed classes {0} and {1}; state 2 is transient.
        let q = RowStochasticMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.5, 0.0],
        ])
        .unwrap();
        let pi = stationary_distribution(&q);
        assert!(close(&pi, &[0.5, 0.5, 0.0], 1e-12));
        // Classes with different sizes: weights ∝ 1/‖μ_k‖².
        let id3 = RowStochasticMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        assert!(close(&stationary_distribution(&id3), &[1.0 / 3.0; 3], 1e-12));
    }

    #[test]
    fn stationary_rejects_non_stochastic() {
        assert!(matches!(
            RowStochasticMatrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]),
            Err(Error::NotRowStochastic { row: 0, .. })
        ));
        assert!(RowStochasticMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn stationary_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.gen_range(1..=8);
            let mut rows = Vec::new();
            for _ in 0..n {
                let mut row: Vec<f64> = (0..n)
                    .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() })
                    .collect();
                row[rng.gen_range(0..n)] += 0.1;
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
                rows.push(row);
            }
            let q = RowStochasticMatrix::from_rows(&rows).unwrap();
            let pi = stationary_distribution(&q);
            assert!(q.stationarity_residual(&pi) < 1e-10);
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pi.iter().all(|&p| p >= 0.0));
        }
    }
}
