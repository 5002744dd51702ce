//! Estimators and tests for gap samples.
//!
//! Everything here is a pure reduction over slices or batches; iteration
//! order is fixed so results are reproducible bit for bit.

use serde::Serialize;
use thiserror::Error;

use crate::rates::RateSequence;
use crate::simulate::TrajectoryBatch;

/// Significance level used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Minimum pooled samples per gap for a stationarity report.
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample value {value} at position {index} is not positive")]
    NonPositive { index: usize, value: f64 },
    #[error("rate {0} must be positive and finite")]
    InvalidRate(f64),
    #[error("significance level {0} must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("gap {index}: {got} samples, need at least {need}")]
    InsufficientSamples { index: i64, got: usize, need: usize },
    #[error("target rates do not cover gap {0}")]
    MissingTarget(i64),
    #[error("need at least 2 time points, got {0}")]
    TooFewTimes(usize),
    #[error("no replicas at t = {0}")]
    NoReplicas(f64),
}

/// `1 / mean` of a positive sample.
pub fn exp_rate_mle(sample: &[f64]) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if let Some((index, &value)) = sample.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(StatsError::NonPositive { index, value });
    }
    Ok(sample.len() as f64 / sample.iter().sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`, the Kolmogorov tail.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS distance `d` at effective size `n_eff`,
/// with the usual `√n + 0.12 + 0.11/√n` small-sample correction.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS test against `Exp(rate)`.
pub fn ks_exponential(sample: &[f64], rate: f64) -> Result<KsResult, StatsError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(StatsError::InvalidRate(rate));
    }
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() };
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let d = max_survival_excess(a, b, true);
    let (n, m) = (a.len() as f64, b.len() as f64);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n * m / (n + m)),
    })
}

/// `sup_x (S_a(x) - S_b(x))` with empirical survival `S(x) = #{> x}/n`,
/// or `sup |S_a - S_b|` when `two_sided`.
fn max_survival_excess(a: &[f64], b: &[f64], two_sided: bool) -> f64 {
    let (xa, xb) = (sorted(a), sorted(b));
    let (n, m) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        let diff = (1.0 - i as f64 / n) - (1.0 - j as f64 / m);
        d = d.max(if two_sided { diff.abs() } else { diff });
    }
    d
}

/// Outcome of testing "A is stochastically dominated by B".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationVerdict {
    /// `sup_x (S_A(x) - S_B(x))`, the one-sided KS distance.
    pub statistic: f64,
    /// Rejection threshold `sqrt(-ln(α)/2 · (n+m)/(nm))`.
    pub critical: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub direction: String,
}

/// One-sided two-sample KS test of `A ⪯ B` on survival functions.
pub fn domination_test(a: &[f64], b: &[f64], alpha: f64) -> Result<DominationVerdict, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let d = max_survival_excess(a, b, false);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ne = n * m / (n + m);
    let critical = (-alpha.ln() / (2.0 * ne)).sqrt();
    Ok(DominationVerdict {
        statistic: d,
        critical,
        p_value: (-2.0 * ne * d * d).exp().min(1.0),
        alpha,
        reject: d > critical,
        direction: "A <= B (stochastic order)".into(),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (0 for fewer than two points).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pearson correlation of paired samples (NaN when degenerate).
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Lag-1 autocorrelation of a single series.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    if xs.len() < 3 {
        return f64::NAN;
    }
    correlation(&xs[..xs.len() - 1], &xs[1..])
}

/// Every `stride`-th element starting at the first.
pub fn thin(xs: &[f64], stride: usize) -> Vec<f64> {
    xs.iter().step_by(stride.max(1)).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStat {
    pub index: i64,
    pub n: usize,
    pub rate_mle: f64,
    pub target_rate: f64,
    pub ks_stat: f64,
    pub ks_p: f64,
    /// Pooled lag-1 autocorrelation of consecutive recorded samples.
    pub lag1_autocorr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStatsReport {
    pub burn_in: f64,
    pub alpha: f64,
    pub gaps: Vec<GapStat>,
    pub indices: Vec<i64>,
    /// Pearson correlations between the tracked gaps, same order as `indices`.
    pub correlation: Vec<Vec<f64>>,
    pub all_pass: bool,
}

impl GapStatsReport {
    /// CSV summary: `index,n,rate_mle,target_rate,ks_stat,ks_p`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,n,rate_mle,target_rate,ks_stat,ks_p\n");
        for g in &self.gaps {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?}\n",
                g.index, g.n, g.rate_mle, g.target_rate, g.ks_stat, g.ks_p
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is serializable")
    }

    pub fn gap(&self, k: i64) -> Option<&GapStat> {
        self.gaps.iter().find(|g| g.index == k)
    }

    /// Largest `|corr|` between gaps adjacent in index.
    pub fn max_adjacent_correlation(&self) -> Option<f64> {
        (1..self.indices.len())
            .filter(|&i| self.indices[i] == self.indices[i - 1] + 1)
            .map(|i| self.correlation[i][i - 1].abs())
            .reduce(f64::max)
    }
}

/// Pools recorded frames with `t >= burn_in` and tests each gap in
/// `indices` against `Exp(target)`, at level [`DEFAULT_ALPHA`].
pub fn stationarity_report(
    batch: &TrajectoryBatch,
    target: &RateSequence,
    burn_in: f64,
    indices: &[i64],
) -> Result<GapStatsReport, StatsError> {
    stationarity_report_at(batch, target, burn_in, indices, DEFAULT_ALPHA)
}

pub fn stationarity_report_at(
    batch: &TrajectoryBatch,
    target: &RateSequence,
    burn_in: f64,
    indices: &[i64],
    alpha: f64,
) -> Result<GapStatsReport, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    // Rows of simultaneous values, one per frame that has every index.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); indices.len()];
    let mut lag_pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); indices.len()];
    for r in &batch.replicas {
        let mut prev: Vec<Option<f64>> = vec![None; indices.len()];
        for f in r.frames.iter().filter(|f| f.t >= burn_in - 1e-12) {
            let vals: Vec<Option<f64>> = indices.iter().map(|&k| f.gap(k)).collect();
            for (i, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    pooled[i].push(*v);
                    if let Some(p) = prev[i] {
                        lag_pairs[i].0.push(p);
                        lag_pairs[i].1.push(*v);
                    }
                }
            }
            if vals.iter().all(Option::is_some) {
                rows.push(vals.iter().map(|v| v.unwrap()).collect());
            }
            prev = vals;
        }
    }
    let mut gaps = Vec::with_capacity(indices.len());
    for (i, &k) in indices.iter().enumerate() {
        let sample = &pooled[i];
        if sample.len() < MIN_SAMPLES {
            return Err(StatsError::InsufficientSamples {
                index: k,
                got: sample.len(),
                need: MIN_SAMPLES,
            });
        }
        let target_rate = target.get(k).ok_or(StatsError::MissingTarget(k))?;
        // Exact zeros are possible for reflected engines; nudge them so
        // the MLE stays defined.
        let positive: Vec<f64> = sample.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
        let rate_mle = exp_rate_mle(&positive)?;
        let ks = ks_exponential(sample, target_rate)?;
        gaps.push(GapStat {
            index: k,
            n: sample.len(),
            rate_mle,
            target_rate,
            ks_stat: ks.statistic,
            ks_p: ks.p_value,
            lag1_autocorr: correlation(&lag_pairs[i].0, &lag_pairs[i].1),
            pass: ks.p_value > alpha,
        });
    }
    let columns: Vec<Vec<f64>> = (0..indices.len())
        .map(|i| rows.iter().map(|r| r[i]).collect())
        .collect();
    let correlation = (0..indices.len())
        .map(|i| {
            (0..indices.len())
                .map(|j| if i == j { 1.0 } else { correlation(&columns[i], &columns[j]) })
                .collect()
        })
        .collect();
    let all_pass = gaps.iter().all(|g| g.pass);
    Ok(GapStatsReport {
        burn_in,
        alpha,
        gaps,
        indices: indices.to_vec(),
        correlation,
        all_pass,
    })
}

/// Mean gap over time with confidence bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayDiagnostic {
    pub times: Vec<f64>,
    pub n: Vec<usize>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `z · standard error`.
    pub half_widths: Vec<f64>,
    /// `(mean_first - mean_last) / sqrt(se_first² + se_last²)`.
    pub trend_z: f64,
    /// Every consecutive pair decreases by more than `z` combined standard errors.
    pub strictly_decreasing: bool,
    pub z: f64,
}

/// Builds the diagnostic from per-time samples (one value per replica).
pub fn decay_diagnostic(points: &[(f64, Vec<f64>)], z: f64) -> Result<DecayDiagnostic, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::TooFewTimes(points.len()));
    }
    let mut d = DecayDiagnostic {
        times: Vec::new(),
        n: Vec::new(),
        means: Vec::new(),
        std_errors: Vec::new(),
        half_widths: Vec::new(),
        trend_z: 0.0,
        strictly_decreasing: true,
        z,
    };
    for (t, xs) in points {
        if xs.is_empty() {
            return Err(StatsError::NoReplicas(*t));
        }
        let se = (variance(xs) / xs.len() as f64).sqrt();
        d.times.push(*t);
        d.n.push(xs.len());
        d.means.push(mean(xs));
        d.std_errors.push(se);
        d.half_widths.push(z * se);
    }
    let combined = |i: usize, j: usize| (d.std_errors[i].powi(2) + d.std_errors[j].powi(2)).sqrt();
    d.strictly_decreasing = (1..d.times.len())
        .all(|i| d.means[i - 1] - d.means[i] > z * combined(i - 1, i));
    let last = d.times.len() - 1;
    d.trend_z = (d.means[0] - d.means[last]) / combined(0, last);
    Ok(d)
}

/// Decay diagnostic of gap `k` read off one batch at the given times.
pub fn decay_from_batch(
    batch: &TrajectoryBatch,
    k: i64,
    times: &[f64],
    z: f64,
) -> Result<DecayDiagnostic, StatsError> {
    let points: Vec<(f64, Vec<f64>)> = times.iter().map(|&t| (t, batch.gap_at_time(k, t))).collect();
    decay_diagnostic(&points, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mle_small_cases() {
        assert_eq!(exp_rate_mle(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(exp_rate_mle(&[2.0]).unwrap(), 0.5);
        assert_eq!(exp_rate_mle(&[]), Err(StatsError::EmptySample));
        assert!(matches!(
            exp_rate_mle(&[1.0, 0.0]),
            Err(StatsError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn ks_at_quantiles() {
        // x_i = F^{-1}(i/10), i = 1..9: just after x_i the empirical CDF is
        // i/9 while F = i/10, so the distance peaks at i = 9 with 1 - 9/10.
        let xs: Vec<f64> = (1..=9).map(|i| -(1.0 - i as f64 / 10.0).ln()).collect();
        let r = ks_exponential(&xs, 1.0).unwrap();
        assert!((r.statistic - 0.1).abs() < 1e-12, "{}", r.statistic);
    }

    #[test]
    fn ks_all_equal_at_median() {
        let xs = vec![std::f64::consts::LN_2; 20];
        let r = ks_exponential(&xs, 1.0).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert!(ks_exponential(&[], 1.0).is_err());
        assert!(ks_exponential(&[1.0], 0.0).is_err());
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098 (classical critical values).
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 2e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn domination_basic_cases() {
        let a: Vec<f64> = (1..=50).map(|i| i as f64 / 7.0).collect();
        let v = domination_test(&a, &a, 0.01).unwrap();
        assert_eq!(v.statistic, 0.0);
        assert!(!v.reject);
        let shifted: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        assert!(!domination_test(&a, &shifted, 0.01).unwrap().reject);
        // A shift of one unit moves 7 of 50 points: D = 0.14 is inside the
        // band at n = m = 50; five units (D ≈ 0.7, up to rounding of the
        // shifted ties) is not.
        assert!(!domination_test(&shifted, &a, 0.01).unwrap().reject);
        let far: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        let v = domination_test(&far, &a, 0.01).unwrap();
        assert!(v.statistic >= 0.7 && v.statistic <= 0.72, "{}", v.statistic);
        assert!(v.reject);
        assert!(domination_test(&[], &a, 0.01).is_err());
    }

    #[test]
    fn two_sample_ks_symmetric() {
        let a = [0.1, 0.5, 0.9, 2.0];
        let b = [0.3, 0.6, 3.0];
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        assert_eq!(ab.statistic, ba.statistic);
        // Largest CDF difference is at x = 2.0: 4/4 - 2/3.
        assert!((ab.statistic - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn decay_errors() {
        assert_eq!(decay_diagnostic(&[(1.0, vec![1.0])], 3.0), Err(StatsError::TooFewTimes(1)));
        assert_eq!(
            decay_diagnostic(&[(1.0, vec![1.0]), (2.0, vec![])], 3.0),
            Err(StatsError::NoReplicas(2.0))
        );
        let d = decay_diagnostic(
            &[(1.0, vec![2.0, 2.1, 1.9]), (2.0, vec![1.0, 1.1, 0.9])],
            3.0,
        )
        .unwrap();
        assert!(d.strictly_decreasing);
        assert!(d.trend_z > 3.0);
    }

    #[test]
    fn thinning_and_lag() {
        assert_eq!(thin(&[1.0, 2.0, 3.0, 4.0, 5.0], 2), vec![1.0, 3.0, 5.0]);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((lag1_autocorrelation(&alt) + 1.0).abs() < 1e-12);
    }
}
