//! Stationary gap rates.
//!
//! Three families live here: the two-parameter family
//! `λ_n = 2Φ_{n+1}(g) + a + bn`, the finite-system product-form rates `μ_n`,
//! and the window rates `λ_k^{(M,N)}` of a finite sub-system together with
//! their limits along a growing sequence of windows.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DriftField, GapVector, ModelError, Window};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatesError {
    #[error("need at least {need} rates, got {got}")]
    WindowTooSmall { need: usize, got: usize },
    #[error("finite system needs at least 2 drifts, got {0}")]
    TooFewDrifts(usize),
    #[error("window [{}, {}] violates the window-rate positivity assumption at k = {k}", .window.m, .window.n)]
    AssumptionViolated { window: Window, k: i64 },
    #[error("window rate for k = {k} decreased from {prev} to {next} at j = {j}")]
    MonotonicityViolated { k: i64, j: u64, prev: f64, next: f64 },
    #[error("limit outcomes mix finite and infinite values")]
    InconsistentLimits,
    #[error("(a, b) = ({a}, {b}) lies outside the positivity region")]
    ParametersOutsideSigma { a: f64, b: f64 },
    #[error("no tracked indices")]
    NoIndices,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    AbFamily { a: f64, b: f64 },
    FiniteProductForm,
    WindowFormula { m: i64, n: i64 },
}

/// Rates `λ_k` for the gaps `k ∈ [window.m, window.n - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSequence {
    pub window: Window,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl RateSequence {
    pub fn get(&self, k: i64) -> Option<f64> {
        if self.window.contains_gap(k) {
            Some(self.values[(k - self.window.m) as usize])
        } else {
            None
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.window.m..self.window.n
    }

    pub fn all_positive(&self) -> bool {
        self.values.iter().all(|v| *v > 0.0)
    }

    /// CSV with columns `index,rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,rate\n");
        for (k, v) in self.indices().zip(&self.values) {
            out.push_str(&format!("{k},{v:?}\n"));
        }
        out
    }
}

/// `λ_n = 2Φ_{n+1}(g) + a + bn`.
pub fn lambda_ab(g: &DriftField, a: f64, b: f64, n: i64) -> f64 {
    2.0 * g.phi(n + 1) + a + b * n as f64
}

/// The `(a, b)` family evaluated on the gaps of `window`.
pub fn lambda_ab_window(g: &DriftField, a: f64, b: f64, window: Window) -> RateSequence {
    RateSequence {
        window,
        values: (window.m..window.n).map(|n| lambda_ab(g, a, b, n)).collect(),
        provenance: Provenance::AbFamily { a, b },
    }
}

/// Residuals `½λ_{n-1} - λ_n + ½λ_{n+1} - (g_{n+1} - g_n)`.
///
/// For the `(a, b)` family only interior indices are reported. Finite and
/// window rates extend by zero at both ends (`λ_{M-1} = λ_N = 0`), so every
/// index gets a residual.
pub fn difference_residual(
    lam: &RateSequence,
    g: &DriftField,
) -> Result<Vec<(i64, f64)>, RatesError> {
    let len = lam.values.len();
    let boundary_zero = !matches!(lam.provenance, Provenance::AbFamily { .. });
    if !boundary_zero && len < 3 {
        return Err(RatesError::WindowTooSmall { need: 3, got: len });
    }
    if len == 0 {
        return Err(RatesError::WindowTooSmall { need: 1, got: 0 });
    }
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= len {
            0.0
        } else {
            lam.values[i as usize]
        }
    };
    let range = if boundary_zero { 0..len } else { 1..len - 1 };
    Ok(range
        .map(|i| {
            let n = lam.window.m + i as i64;
            let i = i as isize;
            let r = 0.5 * at(i - 1) - at(i) + 0.5 * at(i + 1) - (g.at(n + 1) - g.at(n));
            (n, r)
        })
        .collect())
}

/// `2(S_k - c ḡ)` for a window split after `c` particles into a lower sum
/// `S_k` and an upper sum `R_k` over `r` particles. Written as
/// `2(S_k r - c R_k) / (c + r)`, which stays accurate when the window is
/// huge and the two terms of the naive form nearly cancel.
#[inline]
fn rate_from_sums(partial: f64, count: f64, rest: f64, rest_count: f64) -> f64 {
    2.0 * (partial * rest_count - count * rest) / (count + rest_count)
}

/// Suffix sums `Σ_{i > k} g_i` for `k = 0..len-1` (last entry is 0).
fn suffix_sums(g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    for k in (0..g.len().saturating_sub(1)).rev() {
        out[k] = out[k + 1] + g[k + 1];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityViolation {
    /// First `n` (1-based) with `μ_n ≤ 0`.
    pub first_failure: usize,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FiniteRates {
    Stable(RateSequence),
    Unstable(StabilityViolation),
}

impl FiniteRates {
    pub fn stable(self) -> Option<RateSequence> {
        match self {
            FiniteRates::Stable(r) => Some(r),
            FiniteRates::Unstable(_) => None,
        }
    }
}

/// Product-form rates `μ_n = 2(g_1 + ... + g_n - n ḡ_N)` of an `N`-particle
/// system with drifts `g_1..g_N`, indexed by gaps `1..N-1`.
pub fn finite_rates(g: &[f64]) -> Result<FiniteRates, RatesError> {
    let big_n = g.len();
    if big_n < 2 {
        return Err(RatesError::TooFewDrifts(big_n));
    }
    let rest = suffix_sums(g);
    let mut partial = 0.0;
    let mut mu = Vec::with_capacity(big_n - 1);
    for (i, gi) in g[..big_n - 1].iter().enumerate() {
        partial += gi;
        let count = (i + 1) as f64;
        mu.push(rate_from_sums(partial, count, rest[i], big_n as f64 - count));
    }
    if let Some(i) = mu.iter().position(|v| *v <= 0.0) {
        return Ok(FiniteRates::Unstable(StabilityViolation {
            first_failure: i + 1,
            mu,
        }));
    }
    Ok(FiniteRates::Stable(RateSequence {
        window: Window::new(1, big_n as i64)?,
        values: mu,
        provenance: Provenance::FiniteProductForm,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRates {
    pub rates: RateSequence,
    pub assumption_holds: bool,
}

/// `λ_k = 2(k - M + 1)(ḡ[M:k] - ḡ[M:N])` for every `k ∈ [M, N-1]`.
pub fn window_rates(g: &DriftField, w: Window) -> WindowRates {
    let gw: Vec<f64> = (w.m..=w.n).map(|n| g.at(n)).collect();
    let rest = suffix_sums(&gw);
    let total_count = w.particles() as f64;
    let mut partial = 0.0;
    let values: Vec<f64> = gw[..gw.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, gk)| {
            partial += gk;
            let count = (i + 1) as f64;
            rate_from_sums(partial, count, rest[i], total_count - count)
        })
        .collect();
    let assumption_holds = values.iter().all(|v| *v > 0.0);
    WindowRates {
        rates: RateSequence {
            window: w,
            values,
            provenance: Provenance::WindowFormula { m: w.m, n: w.n },
        },
        assumption_holds,
    }
}

/// Single window rate via tail algebra, O(1) in the window size.
pub fn window_rate_at(g: &DriftField, w: Window, k: i64) -> f64 {
    let partial = g.sum_range(w.m, k);
    let rest = g.sum_range(k + 1, w.n);
    let count = (k - w.m + 1) as f64;
    let rest_count = (w.n - k) as f64;
    rate_from_sums(partial, count, rest, rest_count)
}

/// Checks positivity of every window rate without materializing the window.
///
/// On each constant-tail stretch the rate is affine in `k`, so only the
/// stretch endpoints and the core indices need evaluating. Returns the first
/// failing index.
pub fn window_assumption_failure(g: &DriftField, w: Window) -> Option<i64> {
    let last = w.n - 1;
    let mut candidates = Vec::new();
    let left_end = last.min(g.n_minus() - 1);
    if w.m <= left_end {
        candidates.extend([w.m, left_end]);
    }
    let core_lo = w.m.max(g.n_minus());
    let core_hi = last.min(g.n_plus());
    if core_lo <= core_hi {
        candidates.extend(core_lo..=core_hi);
    }
    let right_start = w.m.max(g.n_plus() + 1);
    if right_start <= last {
        candidates.extend([right_start, last]);
    }
    candidates
        .into_iter()
        .find(|&k| window_rate_at(g, w, k) <= 0.0)
}

/// Rule producing the `j`-th window of an approximating sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowStrategy {
    /// `M_j = -j + 1`, `N_j = j`.
    Symmetric,
    /// `M_j = -j + 1`, `N_j = j²`.
    Quadratic,
    /// `M_j = -j + 1`, `N_j = max(j², base^j)`.
    Geometric { base: u32 },
}

impl WindowStrategy {
    /// `None` once the window no longer fits in `i64`.
    pub fn window(&self, j: u64) -> Option<Window> {
        let j = i64::try_from(j).ok()?;
        let m = 1 - j;
        let n = match *self {
            WindowStrategy::Symmetric => j,
            WindowStrategy::Quadratic => j.checked_mul(j)?,
            WindowStrategy::Geometric { base } => {
                let p = i64::from(base).checked_pow(u32::try_from(j).ok()?)?;
                p.max(j.checked_mul(j)?)
            }
        };
        Window::new(m, n).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    /// Cauchy tolerance on successive window rates.
    pub tol: f64,
    /// Rates above this are declared divergent.
    pub divergence: f64,
    pub j_max: u64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            tol: 1e-9,
            divergence: 1e6,
            j_max: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "value", rename_all = "snake_case")]
pub enum LimitOutcome {
    Finite(f64),
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitVerdict {
    pub outcomes: Vec<(i64, LimitOutcome)>,
    pub j_used: u64,
}

impl LimitVerdict {
    pub fn all_finite(&self) -> bool {
        self.outcomes
            .iter()
            .all(|(_, o)| matches!(o, LimitOutcome::Finite(_)))
    }

    pub fn all_infinite(&self) -> bool {
        self.outcomes
            .iter()
            .all(|(_, o)| matches!(o, LimitOutcome::Infinite))
    }

    pub fn get(&self, k: i64) -> Option<LimitOutcome> {
        self.outcomes.iter().find(|(i, _)| *i == k).map(|(_, o)| *o)
    }
}

/// Classifies `λ_k^{(∞)} = lim_j λ_k^{(j)}` for each tracked `k`.
///
/// Windows are taken for `j = 1, 2, ...` until every tracked index is
/// conclusive, `j_max` is reached, or the strategy overflows. Each window is
/// checked for positivity of all its rates, and each tracked sequence is
/// checked to be nondecreasing in `j`.
pub fn lambda_limit(
    g: &DriftField,
    strategy: WindowStrategy,
    indices: &[i64],
    opts: LimitOptions,
) -> Result<LimitVerdict, RatesError> {
    if indices.is_empty() {
        return Err(RatesError::NoIndices);
    }
    let mut outcomes = vec![LimitOutcome::Inconclusive; indices.len()];
    let mut prev: Vec<Option<f64>> = vec![None; indices.len()];
    let mut j_used = 0;
    for j in 1..=opts.j_max {
        let Some(w) = strategy.window(j) else { break };
        if let Some(k) = window_assumption_failure(g, w) {
            return Err(RatesError::AssumptionViolated { window: w, k });
        }
        j_used = j;
        for (i, &k) in indices.iter().enumerate() {
            if !w.contains_gap(k) {
                continue;
            }
            let next = window_rate_at(g, w, k);
            if let Some(p) = prev[i] {
                if next < p - 1e-12 * p.abs().max(1.0) {
                    return Err(RatesError::MonotonicityViolated { k, j, prev: p, next });
                }
                if outcomes[i] == LimitOutcome::Inconclusive {
                    if next > opts.divergence {
                        outcomes[i] = LimitOutcome::Infinite;
                    } else if (next - p).abs() < opts.tol {
                        outcomes[i] = LimitOutcome::Finite(next);
                    }
                }
            }
            prev[i] = Some(next);
        }
        if outcomes.iter().all(|o| *o != LimitOutcome::Inconclusive) {
            break;
        }
    }
    let finite = outcomes
        .iter()
        .any(|o| matches!(o, LimitOutcome::Finite(_)));
    let infinite = outcomes.iter().any(|o| *o == LimitOutcome::Infinite);
    if finite && infinite {
        return Err(RatesError::InconsistentLimits);
    }
    Ok(LimitVerdict {
        outcomes: indices.iter().copied().zip(outcomes).collect(),
        j_used,
    })
}

/// The set of `(a, b)` with every `λ_n > 0`.
///
/// `b` ranges over a closed interval fixed by the two tail slopes; for each
/// admissible `b` the lower bound on `a` is the maximum of finitely many
/// affine functions `-(2Φ_{n+1}(g) + bn)`, one per candidate index.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRegion {
    pub b_min: f64,
    pub b_max: f64,
    pub empty: bool,
    /// Vertices `(b, a_min(b))` of the lower boundary, left to right.
    pub breakpoints: Vec<(f64, f64)>,
    // (slope, intercept) of each candidate line a = intercept + slope * b
    lines: Vec<(f64, f64)>,
}

impl SigmaRegion {
    /// Lower bound on `a` at slope parameter `b` (meaningful inside
    /// `[b_min, b_max]`).
    pub fn a_min(&self, b: f64) -> f64 {
        self.lines
            .iter()
            .map(|(s, c)| c + s * b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, a: f64, b: f64) -> bool {
        !self.empty && b >= self.b_min && b <= self.b_max && a > self.a_min(b)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "b_min": self.b_min,
            "b_max": self.b_max,
            "breakpoints": self.breakpoints.iter().map(|(b, a)| [*b, *a]).collect::<Vec<_>>(),
            "empty": self.empty,
        })
    }
}

pub fn sigma_region(g: &DriftField) -> SigmaRegion {
    // λ_{n+1} - λ_n = 2g_{n+1} + b, so λ is affine beyond the core and its
    // minimum over each tail sits at the tail's first index.
    // Written as differences from 0.0 so that zero tails give +0.0, not -0.0.
    let b_min = 0.0 - 2.0 * g.tail_plus();
    let b_max = 0.0 - 2.0 * g.tail_minus();
    let lines: Vec<(f64, f64)> = (g.n_minus() - 1..=g.n_plus())
        .map(|n| (0.0 - n as f64, 0.0 - 2.0 * g.phi(n + 1)))
        .collect();
    let empty = b_min > b_max;
    let mut region = SigmaRegion {
        b_min,
        b_max,
        empty,
        breakpoints: Vec::new(),
        lines,
    };
    if !empty {
        region.breakpoints = upper_envelope(&region.lines, b_min, b_max);
    }
    region
}

fn upper_envelope(lines: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let value = |i: usize, b: f64| lines[i].1 + lines[i].0 * b;
    let best_at = |b: f64| -> usize {
        let mut best = 0;
        for i in 1..lines.len() {
            let (vi, vb) = (value(i, b), value(best, b));
            if vi > vb || (vi == vb && lines[i].0 > lines[best].0) {
                best = i;
            }
        }
        best
    };
    let mut cur = best_at(lo);
    let mut b = lo;
    let mut out = vec![(lo, value(cur, lo))];
    loop {
        let (s_cur, c_cur) = lines[cur];
        let mut next: Option<(f64, usize)> = None;
        for (i, &(s, c)) in lines.iter().enumerate() {
            if s <= s_cur {
                continue;
            }
            let x = (c_cur - c) / (s - s_cur);
            if x <= b {
                continue;
            }
            next = match next {
                Some((bx, bi)) if bx < x || (bx == x && lines[bi].0 >= s) => Some((bx, bi)),
                _ => Some((x, i)),
            };
        }
        match next {
            Some((x, i)) if x < hi => {
                out.push((x, value(i, x)));
                cur = i;
                b = x;
            }
            _ => break,
        }
    }
    if hi > lo {
        out.push((hi, value(cur, hi)));
    }
    out
}

/// Draws `z_k ~ Exp(λ_k)` independently for the gaps of `window`.
pub fn sample_pi_ab<R: Rng + ?Sized>(
    g: &DriftField,
    a: f64,
    b: f64,
    window: Window,
    rng: &mut R,
) -> Result<GapVector, RatesError> {
    if !sigma_region(g).contains(a, b) {
        return Err(RatesError::ParametersOutsideSigma { a, b });
    }
    let values = (window.m..window.n)
        .map(|n| {
            let e: f64 = rng.sample(Exp1);
            e / lambda_ab(g, a, b, n)
        })
        .collect();
    Ok(GapVector::new(window, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example3() -> DriftField {
        DriftField::new(0, 1, vec![0.0, 1.0], 0.0, 1.0).unwrap()
    }

    fn example4() -> DriftField {
        DriftField::new(0, 1, vec![1.0, 0.0], 1.0, 0.0).unwrap()
    }

    #[test]
    fn zero_drift_gives_constant_rates() {
        let g = DriftField::constant(0.0);
        for n in -10..10 {
            assert_eq!(lambda_ab(&g, 1.7, 0.0, n), 1.7);
        }
    }

    #[test]
    fn example3_and_4_closed_forms() {
        let (a, b) = (0.3, -0.7);
        for n in -20i64..20 {
            let nf = n as f64;
            let e3 = a + b * nf + 2.0 * nf.max(0.0);
            // Φ_{n+1} = 1 + (n ∧ 0) here, so the closed form carries an
            // extra constant 2 that can be absorbed into a.
            let e4 = a + 2.0 + b * nf + 2.0 * nf.min(0.0);
            assert!((lambda_ab(&example3(), a, b, n) - e3).abs() < 1e-12);
            assert!((lambda_ab(&example4(), a, b, n) - e4).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_vanishes_for_ab_family() {
        let g = DriftField::new(-2, 3, vec![0.5, -1.0, 2.0, 0.0, 0.25, 1.0], -0.5, 0.75).unwrap();
        let lam = lambda_ab_window(&g, 2.0, 0.3, Window::new(-10, 10).unwrap());
        for (_, r) in difference_residual(&lam, &g).unwrap() {
            assert!(r.abs() <= 1e-12);
        }
    }

    #[test]
    fn residual_vanishes_for_finite_rates_with_zero_boundary() {
        let g = [2.0, 1.0, 0.5, 0.0];
        let mu = finite_rates(&g).unwrap().stable().unwrap();
        let field = DriftField::from_slice(1, &g).unwrap();
        let res = difference_residual(&mu, &field).unwrap();
        assert_eq!(res.len(), 3);
        for (_, r) in res {
            assert!(r.abs() <= 1e-12);
        }
    }

    #[test]
    fn residual_of_single_perturbation() {
        let g = DriftField::constant(0.0);
        let mut lam = lambda_ab_window(&g, 1.0, 0.0, Window::new(0, 7).unwrap());
        let eps = 0.125;
        lam.values[3] += eps;
        let res: Vec<f64> = difference_residual(&lam, &g)
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        assert_eq!(res, vec![0.0, eps / 2.0, -eps, eps / 2.0, 0.0]);
    }

    #[test]
    fn residual_needs_three_values() {
        let g = DriftField::constant(0.0);
        let lam = lambda_ab_window(&g, 1.0, 0.0, Window::new(0, 2).unwrap());
        assert!(matches!(
            difference_residual(&lam, &g),
            Err(RatesError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn finite_rates_examples() {
        let mu = finite_rates(&[1.0, 0.0]).unwrap().stable().unwrap();
        assert_eq!(mu.values, vec![1.0]);
        assert_eq!(mu.window, Window::new(1, 2).unwrap());
        let mu = finite_rates(&[2.0, 1.0, 0.0]).unwrap().stable().unwrap();
        assert_eq!(mu.values, vec![2.0, 2.0]);
        match finite_rates(&[0.0, 0.0]).unwrap() {
            FiniteRates::Unstable(v) => assert_eq!(v.first_failure, 1),
            other => panic!("expected violation, got {other:?}"),
        }
        assert_eq!(finite_rates(&[1.0]), Err(RatesError::TooFewDrifts(1)));
    }

    #[test]
    fn window_rates_constant_drift_fails_assumption() {
        let g = DriftField::constant(1.0);
        let wr = window_rates(&g, Window::new(-3, 4).unwrap());
        assert!(wr.rates.values.iter().all(|v| *v == 0.0));
        assert!(!wr.assumption_holds);
    }

    #[test]
    fn window_rates_example4_symmetric_window() {
        let wr = window_rates(&example4(), Window::new(-2, 3).unwrap());
        assert_eq!(wr.rates.get(0), Some(3.0));
        let expected: Vec<f64> = (-2i64..3).map(|k| (3 - k.abs()) as f64).collect();
        assert_eq!(wr.rates.values, expected);
        assert!(wr.assumption_holds);
    }

    #[test]
    fn window_rate_at_agrees_with_materialized() {
        let g = DriftField::new(-3, 2, vec![1.0, 0.5, 0.25, 2.0, -1.0, 0.0], 1.5, -0.5).unwrap();
        let w = Window::new(-9, 11).unwrap();
        let wr = window_rates(&g, w);
        for k in w.m..w.n {
            assert!((window_rate_at(&g, w, k) - wr.rates.get(k).unwrap()).abs() < 1e-12);
        }
        assert_eq!(
            window_assumption_failure(&g, w).is_none(),
            wr.assumption_holds
        );
    }

    #[test]
    fn strategy_windows() {
        assert_eq!(WindowStrategy::Symmetric.window(3), Some(Window { m: -2, n: 3 }));
        assert_eq!(WindowStrategy::Quadratic.window(3), Some(Window { m: -2, n: 9 }));
        assert_eq!(
            WindowStrategy::Geometric { base: 4 }.window(3),
            Some(Window { m: -2, n: 64 })
        );
        assert_eq!(WindowStrategy::Geometric { base: 4 }.window(32), None);
    }

    #[test]
    fn lambda_limit_zero_drift_violates_assumption() {
        let r = lambda_limit(
            &DriftField::constant(0.0),
            WindowStrategy::Symmetric,
            &[0],
            LimitOptions::default(),
        );
        assert!(matches!(r, Err(RatesError::AssumptionViolated { .. })));
    }

    #[test]
    fn lambda_limit_example4_diverges() {
        let v = lambda_limit(
            &example4(),
            WindowStrategy::Symmetric,
            &[-2, -1, 0, 1, 2],
            LimitOptions::default(),
        )
        .unwrap();
        assert!(v.all_infinite(), "{v:?}");
    }

    #[test]
    fn sigma_region_examples() {
        let r = sigma_region(&DriftField::constant(0.0));
        assert!(!r.empty);
        assert_eq!((r.b_min, r.b_max), (0.0, 0.0));
        assert_eq!(r.a_min(0.0), 0.0);
        assert!(r.contains(1e-9, 0.0));
        assert!(!r.contains(0.0, 0.0));
        assert!(!r.contains(1.0, 1e-12));

        let r = sigma_region(&example3());
        assert_eq!((r.b_min, r.b_max), (-2.0, 0.0));
        assert_eq!(r.breakpoints, vec![(-2.0, 0.0), (0.0, 0.0)]);
        assert!(r.contains(1.0, -1.0));

        let r = sigma_region(&example4());
        assert!(r.empty);
        assert!(!r.contains(100.0, -1.0));
    }

    #[test]
    fn sigma_region_with_kink() {
        // g = 1 on [0, 2], zero elsewhere: b must be 0 and a > max_n -2Φ_{n+1}
        let g = DriftField::new(-1, 3, vec![0.0, 1.0, 1.0, 1.0, 0.0], 0.0, 0.0).unwrap();
        let r = sigma_region(&g);
        assert_eq!((r.b_min, r.b_max), (0.0, 0.0));
        assert_eq!(r.a_min(0.0), 0.0);
        // g = -1 on [0, 2]: Φ dips to -3, so a > 6
        let g = DriftField::new(-1, 3, vec![0.0, -1.0, -1.0, -1.0, 0.0], 0.0, 0.0).unwrap();
        assert_eq!(sigma_region(&g).a_min(0.0), 6.0);
    }

    #[test]
    fn sample_pi_ab_checks_region_and_is_deterministic() {
        let g = DriftField::constant(0.0);
        let w = Window::new(-2, 2).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let z1 = sample_pi_ab(&g, 1.0, 0.0, w, &mut r1).unwrap();
        let z2 = sample_pi_ab(&g, 1.0, 0.0, w, &mut r2).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(z1.values().len(), 4);
        assert!(matches!(
            sample_pi_ab(&g, 1.0, 0.5, w, &mut r1),
            Err(RatesError::ParametersOutsideSigma { .. })
        ));
    }

    #[test]
    fn sample_pi_ab_mean() {
        let g = DriftField::constant(0.0);
        let w = Window::new(-2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_pi_ab(&g, 1.0, 0.0, w, &mut rng).unwrap().get(0).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }
}
