mod common;

use common::{random_level, DenseGaussian};
use pathmc::recursion::{build_ladder, coarsen_level};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn each_coarsening_is_the_dense_marginal(seed in any::<u64>(), levels in 1usize..=3, d in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fine = random_level(&mut rng, levels, d);
        while fine.level() > 0 {
            let coarse = coarsen_level(&fine).unwrap();
            let survivors: Vec<usize> = coarse.active_nodes().collect();
            let (mean, cov) = DenseGaussian::from_level(&fine).marginal(&survivors);
            let dense = DenseGaussian::from_level(&coarse);
            prop_assert!(max_abs_diff(mean.as_slice(), dense.mean().as_slice()) < 1e-9);
            prop_assert!(max_abs_diff(cov.as_slice(), dense.covariance().as_slice()) < 1e-9);
            fine = coarse;
        }
    }

    #[test]
    fn ladder_matches_finest_marginals(seed in any::<u64>(), levels in 1usize..=3, d in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let finest = random_level(&mut rng, levels, d);
        let joint = DenseGaussian::from_level(&finest);
        let ladder = build_ladder(finest).unwrap();
        for q in ladder.iter() {
            let nodes: Vec<usize> = q.active_nodes().collect();
            let (mean, cov) = joint.marginal(&nodes);
            let dense = DenseGaussian::from_level(q);
            prop_assert!(max_abs_diff(mean.as_slice(), dense.mean().as_slice()) < 1e-9);
            prop_assert!(max_abs_diff(cov.as_slice(), dense.covariance().as_slice()) < 1e-9);
        }
    }

    #[test]
    fn coarse_precisions_stay_symmetric(seed in any::<u64>(), levels in 1usize..=4, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ladder = build_ladder(random_level(&mut rng, levels, d)).unwrap();
        for q in ladder.iter() {
            for node in q.active_nodes() {
                let g = &q.terms(node).unwrap().g;
                prop_assert_eq!(g, &g.transpose());
            }
        }
    }
}
