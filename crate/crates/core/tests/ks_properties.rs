use allocbench_core::ks::{self, Side};
use proptest::prelude::*;

fn sample(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..64).prop_map(|v| v as f64 / 8.0), 1..max_len)
}

proptest! {
    #[test]
    fn identical_samples_have_zero_distance(a in sample(60)) {
        let r = ks::ks_two_sample(&a, &a).unwrap();
        prop_assert_eq!(r.statistic, 0.0);
        prop_assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_samples_have_unit_distance(a in sample(40), b in sample(40)) {
        let shifted: Vec<f64> = b.iter().map(|x| x + 100.0).collect();
        let r = ks::ks_two_sample(&a, &shifted).unwrap();
        prop_assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn statistic_is_symmetric(a in sample(50), b in sample(300)) {
        let ab = ks::ks_two_sample(&a, &b).unwrap();
        let ba = ks::ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn invariant_under_increasing_maps(a in sample(50), b in sample(50)) {
        let f = |x: &f64| (2.0 * x + 1.0).powi(3);
        let fa: Vec<f64> = a.iter().map(f).collect();
        let fb: Vec<f64> = b.iter().map(f).collect();
        prop_assert_eq!(ks::ks_two_sample(&a, &b).unwrap().statistic, ks::ks_two_sample(&fa, &fb).unwrap().statistic);
    }

    #[test]
    fn statistic_and_p_are_bounded(a in sample(50), b in sample(50)) {
        let r = ks::ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn sweep_tail_sizes_are_monotone(a in sample(80), b in sample(200), min_n in 2usize..30) {
        let t = ks::default_thresholds(&a, &b, 40);
        for side in [Side::LeftTail, Side::RightTail] {
            let sweep = ks::tail_sweep(&a, &b, &t, side, min_n).unwrap();
            let sizes: Vec<(usize, usize)> = sweep
                .entries
                .iter()
                .map(|e| match e.outcome {
                    ks::SweepOutcome::Valid(r) => (r.n, r.m),
                    ks::SweepOutcome::Insufficient { n, m } => (n, m),
                })
                .collect();
            for w in sizes.windows(2) {
                match side {
                    Side::LeftTail => prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1),
                    Side::RightTail => prop_assert!(w[1].0 <= w[0].0 && w[1].1 <= w[0].1),
                }
            }
            for (e, &(n, m)) in sweep.entries.iter().zip(&sizes) {
                prop_assert_eq!(e.result().is_some(), n >= min_n && m >= min_n);
            }
        }
    }
}

#[test]
fn tail_sweep_keeps_the_threshold_itself() {
    let a = [1.0, 2.0, 3.0];
    let b = [1.0, 2.0, 3.0, 4.0];
    let left = ks::tail_sweep(&a, &b, &[2.0], Side::LeftTail, 2).unwrap();
    assert_eq!(left.entries[0].result().map(|r| (r.n, r.m)), Some((2, 2)));
    let right = ks::tail_sweep(&a, &b, &[2.0], Side::RightTail, 2).unwrap();
    assert_eq!(right.entries[0].result().map(|r| (r.n, r.m)), Some((2, 3)));
}

#[test]
fn large_distance_is_significant() {
    let a: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..200).map(|i| i as f64 + 80.0).collect();
    let r = ks::ks_two_sample(&a, &b).unwrap();
    assert!((r.statistic - 0.4).abs() < 1e-12);
    assert!(r.p_value < 1e-10);
}
