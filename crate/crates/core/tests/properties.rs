mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbm_meta::distance::{dissimilarity, DistanceKind, DistanceSpec};
use sbm_meta::eval::leave_one_out;
use sbm_meta::knn::ModelSpec;
use sbm_meta::metasearch::{meta_search, SearchConfig};
use sbm_meta::optimize::{weight_grid, FeatureSearch, Optimizer, QuantizedSearch};

use common::{random_dataset, random_model};

fn kind() -> impl Strategy<Value = DistanceKind> {
    prop::sample::select(DistanceKind::default_candidates())
}

fn triple(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let v = || prop::collection::vec(-10.0..10.0f64, n);
    (prop::collection::vec(0.0..3.0f64, n), v(), v(), v())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_nonnegative_zero_on_self(kind in kind(), (w, x, y, _) in (1usize..7).prop_flat_map(triple)) {
        let spec = DistanceSpec::new(kind, w).unwrap();
        let d = dissimilarity(&spec, &x, &y).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, dissimilarity(&spec, &y, &x).unwrap());
        prop_assert_eq!(dissimilarity(&spec, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn weighted_manhattan_and_chebyshev_obey_triangle(
        kind in prop::sample::select(vec![DistanceKind::MANHATTAN, DistanceKind::Chebyshev]),
        (w, x, y, z) in (1usize..7).prop_flat_map(triple),
    ) {
        let spec = DistanceSpec::new(kind, w).unwrap();
        let d = |a: &[f64], b: &[f64]| dissimilarity(&spec, a, b).unwrap();
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
    }

    #[test]
    fn channels_never_lose_to_reference(seed in any::<u64>(), n in 4usize..25, nf in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(&mut rng, n, nf, 2, seed % 2 == 0);
        let reference = random_model(&mut rng, nf, n);
        let opt = Optimizer::new(&d);
        let base = opt.evaluator().correct(&reference).unwrap();
        let k = opt.optimize_k(&reference, 1, n - 1).unwrap();
        let dist = opt.optimize_distance(&reference, &DistanceKind::default_candidates()).unwrap();
        let w = opt.weight_search_quantized(&reference, &QuantizedSearch::default()).unwrap();
        for r in [&k, &dist, &w] {
            prop_assert!(r.correct >= base);
            prop_assert_eq!(r.correct, leave_one_out(&r.model, &d).unwrap().correct);
        }
        if reference.n_active() > 1 {
            for search in [FeatureSearch::default(), FeatureSearch::Greedy] {
                let fs = opt.select_features_with(&reference, search).unwrap();
                prop_assert!(fs.correct >= base);
                prop_assert!(fs.model.n_active() >= 1);
            }
        }
    }

    #[test]
    fn quantized_weights_stay_on_grid(seed in any::<u64>(), n in 4usize..20, nf in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(&mut rng, n, nf, 3, false);
        let found = Optimizer::new(&d)
            .weight_search_quantized(&ModelSpec::reference(nf), &QuantizedSearch::default())
            .unwrap();
        let grid = weight_grid(0.1).unwrap();
        for w in found.model.full_weights() {
            prop_assert!((0.0..=1.0).contains(&w));
            prop_assert!(grid.contains(&w));
        }
    }

    #[test]
    fn meta_search_is_deterministic_and_monotone(seed in any::<u64>(), n in 4usize..20, nf in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(&mut rng, n, nf, 2, true);
        let config = SearchConfig::default();
        let (a, trace_a) = meta_search(&d, &config, None).unwrap();
        let (b, trace_b) = meta_search(&d, &config, None).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(trace_a.to_json_lines(), trace_b.to_json_lines());
        let scores: Vec<usize> = trace_a.levels.iter().map(|l| l.reference_correct).collect();
        prop_assert!(scores.windows(2).all(|w| w[1] > w[0]));
    }
}
