use allocbench_core::rankbench::{rank_density, rank_moments, rank_zscores, GridConfig, TailFunctions};
use proptest::prelude::*;

fn benchmark_sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.05f64..20.0], 30..400)
        .prop_filter("needs a positive value", |v| v.iter().any(|&x| x > 0.0))
}

/// Mean of the histogram distribution (uniform within each bin, atom at 0).
fn histogram_mean(tf: &TailFunctions) -> f64 {
    tf.bin_density
        .iter()
        .zip(tf.bin_edges.windows(2))
        .map(|(rho, e)| rho * 0.5 * (e[1] * e[1] - e[0] * e[0]))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_rank_density_is_normalised(sample in benchmark_sample(), n in 1usize..40) {
        let tf = TailFunctions::estimate(&sample, n, &GridConfig { bins: 60, ..GridConfig::default() }).unwrap();
        for k in 1..=n {
            let rd = rank_density(&tf, k).unwrap();
            prop_assert!((rd.total_mass() - 1.0).abs() < 1e-9);
            let cdf = rd.cdf();
            prop_assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    #[test]
    fn higher_ranks_are_stochastically_larger(sample in benchmark_sample(), n in 2usize..30) {
        let tf = TailFunctions::estimate(&sample, n, &GridConfig { bins: 60, ..GridConfig::default() }).unwrap();
        let rds: Vec<_> = (1..=n).map(|k| rank_density(&tf, k).unwrap()).collect();
        for w in rds.windows(2) {
            let (hi, lo) = (w[0].cdf(), w[1].cdf());
            prop_assert!(hi.iter().zip(&lo).all(|(a, b)| *a <= b + 1e-9));
            prop_assert!(rank_moments(&w[0]).mean >= rank_moments(&w[1]).mean - 1e-9);
        }
    }

    #[test]
    fn rank_means_sum_to_n_times_the_mean(sample in benchmark_sample(), n in 1usize..12) {
        let tf = TailFunctions::estimate(&sample, n, &GridConfig { bins: 50, padding: 0.05, refine: 64 }).unwrap();
        let total: f64 = (1..=n).map(|k| rank_moments(&rank_density(&tf, k).unwrap()).mean).sum();
        let expect = n as f64 * histogram_mean(&tf);
        prop_assert!((total - expect).abs() <= 2e-3 * expect, "{} vs {}", total, expect);
    }

    #[test]
    fn zscores_are_finite_and_ranked(sample in benchmark_sample(), obs in prop::collection::vec(0.0f64..30.0, 1..25)) {
        let tf = TailFunctions::estimate(&sample, obs.len(), &GridConfig::default()).unwrap();
        let p = rank_zscores(&obs, &tf, None).unwrap();
        prop_assert_eq!(p.n(), obs.len());
        prop_assert!(p.ranks.windows(2).all(|w| w[0].observed >= w[1].observed));
        prop_assert!(p.ranks.iter().all(|r| r.z.map_or(true, f64::is_finite)));
    }
}

#[test]
fn rank_densities_sum_to_n_times_the_density() {
    let sample: Vec<f64> = (0..3000).map(|i| if i % 5 == 0 { 0.0 } else { 0.1 + (i % 97) as f64 * 0.07 }).collect();
    let n = 3;
    let tf = TailFunctions::estimate(&sample, n, &GridConfig { bins: 80, padding: 0.05, refine: 64 }).unwrap();
    let rds: Vec<_> = (1..=n).map(|k| rank_density(&tf, k).unwrap()).collect();
    let scale = tf.density.iter().copied().fold(0.0, f64::max);
    for i in 0..tf.grid.len() {
        let sum: f64 = rds.iter().map(|r| r.g[i]).sum();
        assert!((sum - n as f64 * tf.density[i]).abs() <= 1e-3 * n as f64 * scale, "grid point {i}");
    }
    let atoms: f64 = rds.iter().map(|r| r.zero_atom_rank_mass).sum();
    assert!((atoms - n as f64 * tf.zero_atom).abs() < 1e-12);
}
