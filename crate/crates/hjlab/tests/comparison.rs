use hjlab::config::RunConfig;
use hjlab::env::sample_realization;
use hjlab::parabolic::{comparison_check, Grid1D, SolverOptions};
use hjlab::validate::random_ordered_pair;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn options() -> SolverOptions {
    SolverOptions {
        n_samples: 10,
        ..SolverOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ordered_pairs_stay_ordered(seed in 0u64..1_000_000, theta in -1.5f64..1.5) {
        let r = sample_realization(&RunConfig::default().env, seed % 4).unwrap();
        let grid = Grid1D::new(-4.0, 4.0, 1.0 / 32.0, theta, 0.9).unwrap();
        let (v0, w0) = random_ordered_pair(&grid, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(v0.iter().zip(&w0).all(|(v, w)| v <= w));
        let c = comparison_check(&r, &grid, &v0, &w0, 0.25, &options()).unwrap();
        prop_assert!(c.passed, "{:?}", c);
    }

    #[test]
    fn constant_shifts_are_preserved(shift in 0.0f64..2.0, theta in -1.0f64..1.0) {
        let r = sample_realization(&RunConfig::default().env, 0).unwrap();
        let grid = Grid1D::new(-4.0, 4.0, 1.0 / 32.0, theta, 0.9).unwrap();
        let w0: Vec<f64> = grid.nodes().iter().map(|x| theta * x + 0.3 * (3.0 * x).sin()).collect();
        let v0: Vec<f64> = w0.iter().map(|w| w - shift).collect();
        let c = comparison_check(&r, &grid, &v0, &w0, 0.25, &options()).unwrap();
        prop_assert!(c.passed);
        prop_assert!((c.observed_gap + shift).abs() <= 1e-9 * (1.0 + shift));
    }
}
