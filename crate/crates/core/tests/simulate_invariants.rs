//! Structural invariants of the engines and of their persisted output.

use proptest::prelude::*;
use rankflow::model::{Configuration, DiffusionField, DriftField, GapVector, Window};
use rankflow::simulate::io::{csv_string, from_binary, to_binary};
use rankflow::simulate::{
    simulate_gap_srbm, simulate_named_finite, simulate_two_sided_adaptive, solve_skorokhod,
    AdaptiveOptions, Frame, GapSource, NoiseStream, RateLaw, SimConfig, TwoSidedInit,
};

fn check_frame(f: &Frame) {
    let p = f.window.particles();
    assert_eq!(f.y.len(), p);
    assert_eq!(f.z.len(), p - 1);
    assert!(f.names.windows(2).all(|w| w[0] < w[1]), "names sorted");
    assert!(f.y.windows(2).all(|w| w[0] <= w[1]), "ranked positions sorted");
    for (k, z) in f.z.iter().enumerate() {
        assert_eq!(*z, f.y[k + 1] - f.y[k]);
    }
    let mut rn = f.rank_names.clone();
    rn.sort();
    assert_eq!(rn, f.names, "rank_names is a permutation of names");
    for (r, name) in f.rank_names.iter().enumerate() {
        let i = f.names.binary_search(name).unwrap();
        assert_eq!(f.x[i], f.y[r]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn named_frames_are_consistent(
        x in prop::collection::vec(-3.0f64..3.0, 2..7),
        g0 in -2.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let n = x.len();
        let g: Vec<f64> = (0..n).map(|i| g0 - i as f64 * 0.5).collect();
        let cfg = SimConfig::new(0.01, 0.3, 2, seed).with_stride(3);
        let b = simulate_named_finite(&g, &vec![1.0; n], &Configuration::consecutive(1, x), &cfg, &NoiseStream::counter(seed)).unwrap();
        for r in &b.replicas {
            prop_assert!(r.aborted.is_none());
            r.frames.iter().for_each(check_frame);
        }
    }

    #[test]
    fn reflected_gaps_stay_nonnegative(
        z0 in prop::collection::vec(0.0f64..1.0, 1..6),
        seed in 0u64..1000,
    ) {
        let p = z0.len() + 1;
        let w = Window::new(1, p as i64).unwrap();
        let g: Vec<f64> = (0..p).map(|i| 1.0 - i as f64).collect();
        let cfg = SimConfig::new(0.01, 0.5, 2, seed);
        let b = simulate_gap_srbm(&g, &vec![1.0; p], &GapVector::new(w, z0).unwrap(), &cfg, &NoiseStream::counter(seed)).unwrap();
        for r in &b.replicas {
            prop_assert!(r.max_complementarity <= 1e-12);
            let mut prev: Option<Vec<f64>> = None;
            for f in &r.frames {
                prop_assert!(f.z.iter().all(|v| *v >= 0.0));
                let l = f.local_time.clone().unwrap();
                if let Some(pl) = &prev {
                    prop_assert!(l.iter().zip(pl).all(|(a, b)| a >= b));
                }
                prev = Some(l);
            }
        }
    }

    /// The projection solution satisfies the complementarity system.
    #[test]
    fn skorokhod_solution_is_complementary(z in prop::collection::vec(-2.0f64..2.0, 1..10)) {
        let s = solve_skorokhod(&z).unwrap();
        for k in 0..z.len() {
            let push = s.dl[k]
                - if k > 0 { 0.5 * s.dl[k - 1] } else { 0.0 }
                - if k + 1 < z.len() { 0.5 * s.dl[k + 1] } else { 0.0 };
            prop_assert!((s.z[k] - (z[k] + push)).abs() <= 1e-9);
            prop_assert!(s.z[k] >= 0.0 && s.dl[k] >= 0.0);
            prop_assert!((s.z[k] * s.dl[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn binary_and_csv_round_trip(seed in 0u64..1000, stride in 1u64..5) {
        let w = Window::new(-1, 2).unwrap();
        let cfg = SimConfig::new(0.05, 0.4, 2, seed).with_stride(stride);
        let b = simulate_gap_srbm(&[0.5, 0.0, 0.0, -0.5], &[1.0; 4], &GapVector::new(w, vec![0.1, 0.2, 0.3]).unwrap(), &cfg, &NoiseStream::counter(seed)).unwrap();
        let back = from_binary(&to_binary(&b)).unwrap();
        prop_assert_eq!(&back, &b);
        // Shortest round-trip float formatting makes the CSV lossless too.
        let text = csv_string(&b);
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            let r: usize = cols[0].parse().unwrap();
            let t: f64 = cols[1].parse().unwrap();
            let k: i64 = cols[3].parse().unwrap();
            let v: f64 = cols[4].parse().unwrap();
            let f = b.replicas[r].frames.iter().find(|f| f.t == t).unwrap();
            let want = match cols[2] {
                "Y" => f.ranked(k).unwrap(),
                "Z" => f.gap(k).unwrap(),
                "L" => f.local_time.as_ref().unwrap()[(k - f.window.m) as usize],
                "X" => f.x[f.names.binary_search(&k).unwrap()],
                s => panic!("unknown series {s}"),
            };
            prop_assert_eq!(v.to_bits(), want.to_bits());
        }
    }
}

#[test]
fn two_sided_frames_are_consistent_and_thread_independent() {
    let g = DriftField::new(0, 1, vec![0.0, 1.0], 0.0, 1.0).unwrap();
    let init = TwoSidedInit {
        anchor: 0.0,
        core: Window::new(-5, 5).unwrap(),
        source: GapSource::Exponential {
            law: RateLaw::PiAb { g: g.clone(), a: 1.0, b: -1.0 },
        },
    };
    let cfg = SimConfig::new(1e-3, 0.2, 6, 5).with_stride(50);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            simulate_two_sided_adaptive(&g, &DiffusionField::unit(), &init, &cfg, &AdaptiveOptions::default(), &NoiseStream::counter(5))
                .unwrap()
        })
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(to_binary(&one), to_binary(&three));
    assert_eq!(one.events().count(), three.events().count());
    assert!(one.events().count() > 0);
    for r in &one.replicas {
        assert!(r.aborted.is_none());
        assert_eq!(r.frames.len(), 5);
        r.frames.iter().for_each(check_frame);
        for f in &r.frames {
            assert_eq!(f.window, init.core);
        }
    }
}

/// With zero noise the two-particle gap closes at rate `g_1 - g_2`. After
/// contact the reflected gap sticks at zero, while the named Euler scheme
/// chatters within one step's drift of it.
#[test]
fn named_and_reflected_engines_agree_without_noise() {
    let cfg = SimConfig::new(0.25, 3.0, 1, 0);
    let named = simulate_named_finite(&[1.0, 0.0], &[1.0, 1.0], &Configuration::consecutive(1, vec![0.0, 1.0]), &cfg, &NoiseStream::scripted()).unwrap();
    let w = Window::new(1, 2).unwrap();
    let refl = simulate_gap_srbm(&[1.0, 0.0], &[1.0, 1.0], &GapVector::new(w, vec![1.0]).unwrap(), &cfg, &NoiseStream::scripted()).unwrap();
    let a: Vec<f64> = named.replicas[0].frames.iter().map(|f| f.z[0]).collect();
    let b: Vec<f64> = refl.replicas[0].frames.iter().map(|f| f.z[0]).collect();
    assert_eq!(&a[..5], &[1.0, 0.75, 0.5, 0.25, 0.0]);
    assert_eq!(&b[..5], &a[..5]);
    assert!(b[5..].iter().all(|v| *v == 0.0));
    assert!(a[5..].iter().all(|v| (0.0..=0.25).contains(v)));
}
