//! Domain types for rank-based particle systems.
//!
//! Two-sided coefficient families are stored as a finite core plus two
//! constant tails, so every infinite sum that shows up in the rate calculus
//! reduces to a core sum plus `count * tail` terms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid window [{m}, {n}]: need m < n")]
    InvalidWindow { m: i64, n: i64 },
    #[error("core has {got} values but index range [{n_minus}, {n_plus}] needs {want}")]
    CoreLength {
        n_minus: i64,
        n_plus: i64,
        got: usize,
        want: usize,
    },
    #[error("diffusion coefficient at index {index} is {value}, must be > 0")]
    NonPositiveDiffusion { index: i64, value: f64 },
    #[error("non-finite coefficient at index {index}")]
    NonFiniteCoefficient { index: i64 },
    #[error("sequence decreases at position {index}")]
    DecreasingInput { index: usize },
    #[error("index {index} outside window [{m}, {n}]")]
    IndexOutsideWindow { index: i64, m: i64, n: i64 },
    #[error("negative gap {value} at index {index}")]
    NegativeGap { index: i64, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("duplicate particle name {0}")]
    DuplicateName(i64),
    #[error("index arithmetic overflow")]
    Overflow,
}

/// Integer window `[m, n]` of ranks (or names), `m < n`.
///
/// A window of particles `[m, n]` carries the gaps `m..=n-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub m: i64,
    pub n: i64,
}

impl Window {
    pub fn new(m: i64, n: i64) -> Result<Self, ModelError> {
        if m < n {
            Ok(Window { m, n })
        } else {
            Err(ModelError::InvalidWindow { m, n })
        }
    }

    /// Number of particles, `n - m + 1`.
    pub fn particles(&self) -> usize {
        (self.n - self.m + 1) as usize
    }

    /// Number of gaps, `n - m`.
    pub fn gaps(&self) -> usize {
        (self.n - self.m) as usize
    }

    pub fn contains(&self, k: i64) -> bool {
        self.m <= k && k <= self.n
    }

    pub fn contains_gap(&self, k: i64) -> bool {
        self.m <= k && k < self.n
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.m <= other.m && other.n <= self.n
    }
}

/// A two-sided real sequence that is constant outside `[n_minus, n_plus]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailedSequence {
    n_minus: i64,
    n_plus: i64,
    core: Vec<f64>,
    tail_minus: f64,
    tail_plus: f64,
    // prefix[i] = core[0] + ... + core[i-1]
    prefix: Vec<f64>,
}

impl TailedSequence {
    pub fn new(
        n_minus: i64,
        n_plus: i64,
        core: Vec<f64>,
        tail_minus: f64,
        tail_plus: f64,
    ) -> Result<Self, ModelError> {
        if n_plus < n_minus {
            return Err(ModelError::InvalidWindow {
                m: n_minus,
                n: n_plus,
            });
        }
        let want = (n_plus - n_minus + 1) as usize;
        if core.len() != want {
            return Err(ModelError::CoreLength {
                n_minus,
                n_plus,
                got: core.len(),
                want,
            });
        }
        for (i, v) in core.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteCoefficient {
                    index: n_minus + i as i64,
                });
            }
        }
        if !tail_minus.is_finite() {
            return Err(ModelError::NonFiniteCoefficient { index: n_minus - 1 });
        }
        if !tail_plus.is_finite() {
            return Err(ModelError::NonFiniteCoefficient { index: n_plus + 1 });
        }
        let mut prefix = Vec::with_capacity(core.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for v in &core {
            acc += v;
            prefix.push(acc);
        }
        Ok(TailedSequence {
            n_minus,
            n_plus,
            core,
            tail_minus,
            tail_plus,
            prefix,
        })
    }

    pub fn constant(value: f64) -> Self {
        TailedSequence::new(0, 0, vec![value], value, value).expect("finite constant")
    }

    /// Represents an eventually-constant-in-ℓ² sequence `f(n) → limit` by
    /// widening the core symmetrically until the squared deviation outside
    /// the core falls below `threshold`. `probe` bounds how far out the
    /// remainder is measured.
    pub fn from_fn_l2(
        f: impl Fn(i64) -> f64,
        limit: f64,
        threshold: f64,
        probe: i64,
    ) -> Result<Self, ModelError> {
        let dev = |n: i64| {
            let d = f(n) - limit;
            d * d
        };
        // remainder[k] = sum of squared deviations over |n| > k, up to probe
        let mut half = 0i64;
        let mut outside: f64 = (1..=probe).map(|n| dev(n) + dev(-n)).sum::<f64>();
        while outside >= threshold && half < probe {
            half += 1;
            outside -= dev(half) + dev(-half);
        }
        let core: Vec<f64> = (-half..=half).map(&f).collect();
        TailedSequence::new(-half, half, core, limit, limit)
    }

    pub fn n_minus(&self) -> i64 {
        self.n_minus
    }

    pub fn n_plus(&self) -> i64 {
        self.n_plus
    }

    pub fn core(&self) -> &[f64] {
        &self.core
    }

    pub fn tail_minus(&self) -> f64 {
        self.tail_minus
    }

    pub fn tail_plus(&self) -> f64 {
        self.tail_plus
    }

    pub fn core_window(&self) -> (i64, i64) {
        (self.n_minus, self.n_plus)
    }

    #[inline]
    pub fn at(&self, n: i64) -> f64 {
        if n < self.n_minus {
            self.tail_minus
        } else if n > self.n_plus {
            self.tail_plus
        } else {
            self.core[(n - self.n_minus) as usize]
        }
    }

    /// `sup_n |value_n|`.
    pub fn sup_abs(&self) -> f64 {
        self.core
            .iter()
            .fold(self.tail_minus.abs().max(self.tail_plus.abs()), |acc, v| {
                acc.max(v.abs())
            })
    }

    pub fn sup(&self) -> f64 {
        self.core
            .iter()
            .fold(self.tail_minus.max(self.tail_plus), |acc, v| acc.max(*v))
    }

    pub fn inf(&self) -> f64 {
        self.core
            .iter()
            .fold(self.tail_minus.min(self.tail_plus), |acc, v| acc.min(*v))
    }

    /// Sum over the inclusive range `[lo, hi]`; zero when `lo > hi`.
    ///
    /// Tail portions contribute `count * tail` so the cost is O(1) for any
    /// range size representable in `i64`.
    pub fn sum_range(&self, lo: i64, hi: i64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        let mut total = 0.0;
        if lo < self.n_minus {
            let end = hi.min(self.n_minus - 1);
            total += (end as f64 - lo as f64 + 1.0) * self.tail_minus;
        }
        let c_lo = lo.max(self.n_minus);
        let c_hi = hi.min(self.n_plus);
        if c_lo <= c_hi {
            let a = (c_lo - self.n_minus) as usize;
            let b = (c_hi - self.n_minus) as usize + 1;
            total += self.prefix[b] - self.prefix[a];
        }
        if hi > self.n_plus {
            let start = lo.max(self.n_plus + 1);
            total += (hi as f64 - start as f64 + 1.0) * self.tail_plus;
        }
        total
    }

    /// `Φ_n` applied to the sequence itself, anchored at zero:
    /// `Φ_0 = 0` and `Φ_{n+1} - Φ_n = value_n`.
    pub fn phi(&self, n: i64) -> f64 {
        if n >= 1 {
            self.sum_range(0, n - 1)
        } else if n == 0 {
            0.0
        } else {
            -self.sum_range(n, -1)
        }
    }

    /// Values on an inclusive index range, materialized.
    pub fn values(&self, lo: i64, hi: i64) -> Vec<f64> {
        (lo..=hi).map(|n| self.at(n)).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftRepr {
    n_minus: i64,
    n_plus: i64,
    core: Vec<f64>,
    g_minus: f64,
    g_plus: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiffusionRepr {
    n_minus: i64,
    n_plus: i64,
    core: Vec<f64>,
    s_minus: f64,
    s_plus: f64,
}

/// Rank-indexed drift coefficients `g_n`, constant outside the core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DriftRepr", into = "DriftRepr")]
pub struct DriftField(TailedSequence);

impl DriftField {
    pub fn new(
        n_minus: i64,
        n_plus: i64,
        core: Vec<f64>,
        g_minus: f64,
        g_plus: f64,
    ) -> Result<Self, ModelError> {
        TailedSequence::new(n_minus, n_plus, core, g_minus, g_plus).map(DriftField)
    }

    pub fn constant(g: f64) -> Self {
        DriftField(TailedSequence::constant(g))
    }

    /// Finite list `g_first, g_first+1, ...` with the end values continued
    /// as tails.
    pub fn from_slice(first: i64, values: &[f64]) -> Result<Self, ModelError> {
        let last = first + values.len() as i64 - 1;
        let (lo, hi) = match (values.first(), values.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(ModelError::LengthMismatch { left: 0, right: 1 }),
        };
        DriftField::new(first, last, values.to_vec(), lo, hi)
    }

    /// Widens the core of an ℓ²-perturbed constant drift `f(n) → limit`
    /// until the squared remainder is below `threshold` (default 1e-9).
    pub fn from_l2_perturbation(
        f: impl Fn(i64) -> f64,
        limit: f64,
        threshold: f64,
    ) -> Result<Self, ModelError> {
        TailedSequence::from_fn_l2(f, limit, threshold, 1 << 20).map(DriftField)
    }

    pub fn seq(&self) -> &TailedSequence {
        &self.0
    }

    #[inline]
    pub fn at(&self, n: i64) -> f64 {
        self.0.at(n)
    }

    /// `ḡ = sup |g_n|`.
    pub fn sup_abs(&self) -> f64 {
        self.0.sup_abs()
    }

    pub fn n_minus(&self) -> i64 {
        self.0.n_minus
    }

    pub fn n_plus(&self) -> i64 {
        self.0.n_plus
    }

    pub fn tail_minus(&self) -> f64 {
        self.0.tail_minus
    }

    pub fn tail_plus(&self) -> f64 {
        self.0.tail_plus
    }

    pub fn sum_range(&self, lo: i64, hi: i64) -> f64 {
        self.0.sum_range(lo, hi)
    }

    /// `Φ_n(g)`.
    pub fn phi(&self, n: i64) -> f64 {
        self.0.phi(n)
    }

    pub fn values(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.0.values(lo, hi)
    }
}

impl TryFrom<DriftRepr> for DriftField {
    type Error = ModelError;
    fn try_from(r: DriftRepr) -> Result<Self, Self::Error> {
        DriftField::new(r.n_minus, r.n_plus, r.core, r.g_minus, r.g_plus)
    }
}

impl From<DriftField> for DriftRepr {
    fn from(f: DriftField) -> Self {
        DriftRepr {
            n_minus: f.0.n_minus,
            n_plus: f.0.n_plus,
            core: f.0.core,
            g_minus: f.0.tail_minus,
            g_plus: f.0.tail_plus,
        }
    }
}

/// Rank-indexed diffusion coefficients `σ_n > 0` (standard deviations per
/// unit √time), constant outside the core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiffusionRepr", into = "DiffusionRepr")]
pub struct DiffusionField(TailedSequence);

impl DiffusionField {
    pub fn new(
        n_minus: i64,
        n_plus: i64,
        core: Vec<f64>,
        s_minus: f64,
        s_plus: f64,
    ) -> Result<Self, ModelError> {
        let seq = TailedSequence::new(n_minus, n_plus, core, s_minus, s_plus)?;
        for (i, v) in seq.core.iter().enumerate() {
            if *v <= 0.0 {
                return Err(ModelError::NonPositiveDiffusion {
                    index: n_minus + i as i64,
                    value: *v,
                });
            }
        }
        if s_minus <= 0.0 {
            return Err(ModelError::NonPositiveDiffusion {
                index: n_minus - 1,
                value: s_minus,
            });
        }
        if s_plus <= 0.0 {
            return Err(ModelError::NonPositiveDiffusion {
                index: n_plus + 1,
                value: s_plus,
            });
        }
        Ok(DiffusionField(seq))
    }

    pub fn unit() -> Self {
        DiffusionField(TailedSequence::constant(1.0))
    }

    pub fn seq(&self) -> &TailedSequence {
        &self.0
    }

    #[inline]
    pub fn at(&self, n: i64) -> f64 {
        self.0.at(n)
    }

    /// `σ̄ = sup σ_n`.
    pub fn sup(&self) -> f64 {
        self.0.sup()
    }

    pub fn n_minus(&self) -> i64 {
        self.0.n_minus
    }

    pub fn n_plus(&self) -> i64 {
        self.0.n_plus
    }

    pub fn tail_minus(&self) -> f64 {
        self.0.tail_minus
    }

    pub fn tail_plus(&self) -> f64 {
        self.0.tail_plus
    }

    pub fn values(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.0.values(lo, hi)
    }
}

impl TryFrom<DiffusionRepr> for DiffusionField {
    type Error = ModelError;
    fn try_from(r: DiffusionRepr) -> Result<Self, Self::Error> {
        DiffusionField::new(r.n_minus, r.n_plus, r.core, r.s_minus, r.s_plus)
    }
}

impl From<DiffusionField> for DiffusionRepr {
    fn from(f: DiffusionField) -> Self {
        DiffusionRepr {
            n_minus: f.0.n_minus,
            n_plus: f.0.n_plus,
            core: f.0.core,
            s_minus: f.0.tail_minus,
            s_plus: f.0.tail_plus,
        }
    }
}

/// Named particle positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    names: Vec<i64>,
    positions: Vec<f64>,
}

impl Configuration {
    pub fn new(names: Vec<i64>, positions: Vec<f64>) -> Result<Self, ModelError> {
        if names.len() != positions.len() {
            return Err(ModelError::LengthMismatch {
                left: names.len(),
                right: positions.len(),
            });
        }
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateName(w[0]));
        }
        Ok(Configuration { names, positions })
    }

    /// Names `first, first+1, ...` in the given order.
    pub fn consecutive(first: i64, positions: Vec<f64>) -> Self {
        let names = (0..positions.len() as i64).map(|i| first + i).collect();
        Configuration { names, positions }
    }

    pub fn names(&self) -> &[i64] {
        &self.names
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Ranking of a configuration: `order[r]` is the slot (index into the
/// configuration) holding rank `r`, counted from the bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankAssignment {
    order: Vec<usize>,
    names: Vec<i64>,
}

impl RankAssignment {
    /// Names bottom to top.
    pub fn names(&self) -> &[i64] {
        &self.names
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(r, &i)| r == i)
    }

    pub fn ranked_positions(&self, config: &Configuration) -> Vec<f64> {
        self.order.iter().map(|&i| config.positions[i]).collect()
    }

    /// Relabels the configuration so slot `r` holds the rank-`r` particle.
    pub fn apply(&self, config: &Configuration) -> Configuration {
        Configuration {
            names: self.names.clone(),
            positions: self.ranked_positions(config),
        }
    }
}

#[inline]
pub(crate) fn rank_cmp(pa: f64, na: i64, pb: f64, nb: i64) -> std::cmp::Ordering {
    pa.total_cmp(&pb).then(na.cmp(&nb))
}

/// Ranks bottom to top; equal positions are ordered by ascending name.
pub fn rank(config: &Configuration) -> RankAssignment {
    let mut order: Vec<usize> = (0..config.len()).collect();
    order.sort_by(|&a, &b| {
        rank_cmp(
            config.positions[a],
            config.names[a],
            config.positions[b],
            config.names[b],
        )
    });
    let names = order.iter().map(|&i| config.names[i]).collect();
    RankAssignment { order, names }
}

/// Gaps `z_k ≥ 0` for `k ∈ [window.m, window.n - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapVector {
    window: Window,
    values: Vec<f64>,
}

impl GapVector {
    pub fn new(window: Window, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != window.gaps() {
            return Err(ModelError::LengthMismatch {
                left: values.len(),
                right: window.gaps(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !(*v >= 0.0) {
                return Err(ModelError::NegativeGap {
                    index: window.m + i as i64,
                    value: *v,
                });
            }
        }
        Ok(GapVector { window, values })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: i64) -> Option<f64> {
        if self.window.contains_gap(k) {
            Some(self.values[(k - self.window.m) as usize])
        } else {
            None
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        GapVector::new(self.window, self.values.iter().map(|v| v * factor).collect())
    }
}

/// Adjacent differences of ranked positions `y_M ≤ ... ≤ y_N`.
pub fn gaps_from_ranked(ranked: &[f64], window: Window) -> Result<GapVector, ModelError> {
    if ranked.len() != window.particles() {
        return Err(ModelError::LengthMismatch {
            left: ranked.len(),
            right: window.particles(),
        });
    }
    let mut values = Vec::with_capacity(window.gaps());
    for (i, w) in ranked.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d >= 0.0) {
            return Err(ModelError::DecreasingInput { index: i + 1 });
        }
        values.push(d);
    }
    Ok(GapVector { window, values })
}

/// `Φ_n(z)`: position of rank `n` relative to rank 0.
///
/// Uses the telescoping convention `Φ_{n+1} - Φ_n = z_n`, so for negative
/// `n` the result is `-(z_n + ... + z_{-1})`.
pub fn phi(z: &GapVector, n: i64) -> Result<f64, ModelError> {
    let w = z.window;
    let outside = |index| ModelError::IndexOutsideWindow {
        index,
        m: w.m,
        n: w.n,
    };
    if !w.contains(0) {
        return Err(outside(0));
    }
    if !w.contains(n) {
        return Err(outside(n));
    }
    let zero = (-w.m) as usize;
    let idx = (n - w.m) as usize;
    let mut acc = 0.0;
    if n >= 0 {
        for v in &z.values[zero..idx] {
            acc += v;
        }
        Ok(acc)
    } else {
        for v in z.values[idx..zero].iter().rev() {
            acc -= v;
        }
        Ok(acc)
    }
}

/// Ranked positions `Y_n = anchor + Φ_n(z)` over the gap vector's window.
pub fn positions_from_gaps(z: &GapVector, anchor: f64) -> Result<Vec<f64>, ModelError> {
    let w = z.window;
    if !w.contains(0) {
        return Err(ModelError::IndexOutsideWindow {
            index: 0,
            m: w.m,
            n: w.n,
        });
    }
    let zero = (-w.m) as usize;
    let mut y = vec![0.0; w.particles()];
    y[zero] = anchor;
    for i in zero..w.gaps() {
        y[i + 1] = y[i] + z.values[i];
    }
    for i in (0..zero).rev() {
        y[i] = y[i + 1] - z.values[i];
    }
    Ok(y)
}
