#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use sbm_meta::dataset::{Dataset, FeatureSpec};
use sbm_meta::distance::DistanceKind;
use sbm_meta::knn::{ModelSpec, NeighborTies};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

/// Random dataset; `coarse` values are small integers so distance ties are common.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, n_features: usize, n_classes: usize, coarse: bool) -> Dataset {
    let vectors = (0..n)
        .map(|_| {
            (0..n_features)
                .map(|_| {
                    if coarse {
                        rng.gen_range(-2..=3) as f64
                    } else {
                        rng.gen_range(-5.0..5.0)
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
    Dataset::new(
        (0..n_features).map(|i| FeatureSpec::continuous(format!("x{i}"), i)).collect(),
        vectors,
        labels,
        class_names(n_classes),
    )
    .unwrap()
}

pub fn random_kind<R: Rng>(rng: &mut R) -> DistanceKind {
    *DistanceKind::default_candidates().choose(rng).unwrap()
}

/// Random valid model for `n_features` features and `n` training vectors.
pub fn random_model<R: Rng>(rng: &mut R, n_features: usize, n: usize) -> ModelSpec {
    let weights: Vec<f64> = (0..n_features)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..2.0) })
        .collect();
    let mut m = ModelSpec::reference(n_features)
        .with_k(rng.gen_range(1..=(n - 1).min(5)))
        .with_kind(random_kind(rng))
        .with_ties(if rng.gen_bool(0.5) { NeighborTies::Include } else { NeighborTies::Exact })
        .with_full_weights(&weights);
    for f in 0..n_features {
        if m.n_active() > 1 && rng.gen_bool(0.2) {
            m = m.without_feature(f);
        }
    }
    m
}
