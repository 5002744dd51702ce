//! Estimators and tests checked against tabulated values and brute force.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rankflow::stats::{
    decay_diagnostic, domination_test, exp_rate_mle, kolmogorov_q, ks_exponential, ks_two_sample,
    StatsError,
};

fn exp_sample(rate: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Exp::new(rate).unwrap();
    (0..n).map(|_| rng.sample(d)).collect()
}

#[test]
fn kolmogorov_tail_matches_tabulated_critical_values() {
    // Asymptotic critical values 1.2239 (10%), 1.3581 (5%), 1.6276 (1%).
    for (lambda, p) in [(1.2239, 0.10), (1.3581, 0.05), (1.6276, 0.01)] {
        assert!((kolmogorov_q(lambda) - p).abs() < 2e-4, "{lambda}");
    }
    assert_eq!(kolmogorov_q(0.0), 1.0);
    assert!(kolmogorov_q(5.0) < 1e-20);
}

#[test]
fn rate_mle_error_shrinks_like_inverse_root_n() {
    for rate in [0.5, 1.0, 3.0] {
        for n in [1_000usize, 10_000] {
            for seed in 0..5 {
                let est = exp_rate_mle(&exp_sample(rate, n, seed)).unwrap();
                let bound = 4.0 * rate / (n as f64).sqrt();
                assert!((est - rate).abs() < bound, "rate {rate}, n {n}: {est}");
            }
        }
    }
}

proptest! {
    /// The KS statistic equals a brute-force sup over the jumps of the
    /// empirical distribution function.
    #[test]
    fn ks_statistic_matches_brute_force(xs in prop::collection::vec(0.001f64..5.0, 1..60), rate in 0.2f64..3.0) {
        let cdf = |x: f64| 1.0 - (-rate * x).exp();
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for &x in &xs {
            let below = xs.iter().filter(|&&y| y < x).count() as f64 / n;
            let at_or_below = xs.iter().filter(|&&y| y <= x).count() as f64 / n;
            d = d.max((cdf(x) - below).abs()).max((at_or_below - cdf(x)).abs());
        }
        let ks = ks_exponential(&xs, rate).unwrap();
        prop_assert!((ks.statistic - d).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ks.p_value));
    }

    #[test]
    fn two_sample_statistic_is_symmetric(
        a in prop::collection::vec(0.0f64..5.0, 1..40),
        b in prop::collection::vec(0.0f64..5.0, 1..40),
    ) {
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert!((ab.statistic - ba.statistic).abs() < 1e-12);
    }
}

#[test]
fn ks_accepts_right_rate_and_rejects_wrong_one() {
    let xs = exp_sample(2.0, 5_000, 11);
    assert!(ks_exponential(&xs, 2.0).unwrap().p_value > 0.01);
    assert!(ks_exponential(&xs, 2.3).unwrap().p_value < 0.01);
}

#[test]
fn domination_of_shifted_samples() {
    let b = exp_sample(1.0, 2_000, 3);
    let a_smaller: Vec<f64> = b.iter().map(|x| x * 0.5).collect();
    let v = domination_test(&a_smaller, &b, 0.01).unwrap();
    assert!(!v.reject);
    assert_eq!(v.statistic, 0.0);
    let a_bigger: Vec<f64> = b.iter().map(|x| x + 1.0).collect();
    assert!(domination_test(&a_bigger, &b, 0.01).unwrap().reject);
}

#[test]
fn decay_diagnostic_null_and_errors() {
    let points: Vec<(f64, Vec<f64>)> = (0..3)
        .map(|i| (i as f64, exp_sample(1.0, 400, 100 + i)))
        .collect();
    let d = decay_diagnostic(&points, 3.0).unwrap();
    assert!(!d.strictly_decreasing);
    assert!(d.trend_z.abs() < 3.0);
    assert_eq!(
        decay_diagnostic(&[(1.0, vec![1.0])], 3.0),
        Err(StatsError::TooFewTimes(1))
    );
    assert_eq!(
        decay_diagnostic(&[(1.0, vec![1.0]), (2.0, vec![])], 3.0),
        Err(StatsError::NoReplicas(2.0))
    );
}
