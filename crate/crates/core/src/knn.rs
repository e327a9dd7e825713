//! k-nearest-neighbor classification under a [`ModelSpec`].
//!
//! The reference set is always the full training set. Class probabilities
//! are vote fractions `N_i / m` over the neighborhood of size `m`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::{dissimilarity, DistanceKind, DistanceSpec};
use crate::error::{Error, Result};

/// How neighbors tied with the k-th nearest distance are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborTies {
    /// Every vector at the k-th distance joins the neighborhood, so it may
    /// hold more than `k` vectors.
    #[default]
    Include,
    /// Exactly `k` neighbors; ties at the cutoff go to the lower row index.
    Exact,
}

impl std::str::FromStr for NeighborTies {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "include" => Ok(NeighborTies::Include),
            "exact" => Ok(NeighborTies::Exact),
            other => Err(format!("unknown tie policy `{other}` (include, exact)")),
        }
    }
}

/// One point of the model space: k, distance kind and weights, feature subset.
///
/// `distance.weights` holds one weight per *active* feature, in feature order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    pub distance: DistanceSpec,
    pub feature_mask: Vec<bool>,
    #[serde(default)]
    pub ties: NeighborTies,
}

impl ModelSpec {
    /// Plain 1-NN with unit-weight Euclidean distance over all features.
    pub fn reference(n_features: usize) -> Self {
        ModelSpec {
            k: 1,
            distance: DistanceSpec::unit(DistanceKind::EUCLIDEAN, n_features),
            feature_mask: vec![true; n_features],
            ties: NeighborTies::default(),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_kind(mut self, kind: DistanceKind) -> Self {
        self.distance.kind = kind;
        self
    }

    pub fn with_ties(mut self, ties: NeighborTies) -> Self {
        self.ties = ties;
        self
    }

    pub fn kind(&self) -> DistanceKind {
        self.distance.kind
    }

    pub fn n_features(&self) -> usize {
        self.feature_mask.len()
    }

    pub fn active_features(&self) -> Vec<usize> {
        self.feature_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.feature_mask.iter().filter(|&&on| on).count()
    }

    /// Weights expanded to all features, zero where masked out.
    pub fn full_weights(&self) -> Vec<f64> {
        let mut active = self.distance.weights.iter();
        self.feature_mask
            .iter()
            .map(|&on| if on { *active.next().unwrap_or(&0.0) } else { 0.0 })
            .collect()
    }

    /// Replace the weights of the active features, given a full-length vector.
    /// Entries of masked features are ignored.
    pub fn with_full_weights(mut self, full: &[f64]) -> Self {
        self.distance.weights = self.active_features().iter().map(|&i| full[i]).collect();
        self
    }

    /// Mask out `feature`, dropping its weight.
    pub fn without_feature(&self, feature: usize) -> Self {
        let mut m = self.clone();
        if let Some(pos) = self.active_features().iter().position(|&i| i == feature) {
            m.distance.weights.remove(pos);
            m.feature_mask[feature] = false;
        }
        m
    }

    /// Distance over all features with masked ones weighted zero.
    pub fn metric(&self) -> DistanceSpec {
        DistanceSpec {
            kind: self.distance.kind,
            weights: self.full_weights(),
        }
    }

    /// Number of parameters deviating from the k = 1 unit-weight Euclidean
    /// model: k != 1, each non-unit weight, each masked feature, a
    /// non-Euclidean kind.
    pub fn complexity_rank(&self) -> usize {
        usize::from(self.k != 1)
            + self.distance.weights.iter().filter(|&&w| w != 1.0).count()
            + self.feature_mask.iter().filter(|&&on| !on).count()
            + usize::from(self.distance.kind != DistanceKind::EUCLIDEAN)
    }

    /// Check internal consistency and compatibility with `n_features`.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidModel("k must be at least 1".into()));
        }
        if self.feature_mask.len() != n_features {
            return Err(Error::InvalidModel(format!(
                "feature mask has {} entries for {n_features} features",
                self.feature_mask.len()
            )));
        }
        let active = self.n_active();
        if active == 0 {
            return Err(Error::InvalidModel("no active features".into()));
        }
        if self.distance.weights.len() != active {
            return Err(Error::InvalidModel(format!(
                "{} weights for {active} active features",
                self.distance.weights.len()
            )));
        }
        self.distance.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_probs: Vec<f64>,
    /// Neighbor count per class.
    pub votes: Vec<usize>,
    pub winner: usize,
}

/// Pick the neighborhood from one row of distances.
pub(crate) fn select_neighbors(
    distances: &[f64],
    k: usize,
    exclude: Option<usize>,
    ties: NeighborTies,
) -> Result<Vec<Neighbor>> {
    let available = distances.len() - usize::from(exclude.is_some_and(|e| e < distances.len()));
    if k == 0 || k > available {
        return Err(Error::KTooLarge { k, available });
    }
    let mut all: Vec<Neighbor> = distances
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(index, &distance)| Neighbor { index, distance })
        .collect();
    let order = |a: &Neighbor, b: &Neighbor| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    };
    let mut end = k;
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, order);
        if ties == NeighborTies::Include {
            let cutoff = all[k - 1].distance;
            // partition the tail so tied vectors follow the first k
            let (_, tail) = all.split_at_mut(k);
            let mut j = 0;
            for i in 0..tail.len() {
                if tail[i].distance == cutoff {
                    tail.swap(i, j);
                    j += 1;
                }
            }
            end = k + j;
        }
    }
    all.truncate(end);
    all.sort_by(order);
    Ok(all)
}

/// Majority vote over a neighborhood. Ties between classes go to the class
/// with the smaller summed neighbor distance, then to the lower class index.
pub(crate) fn vote(neighbors: &[Neighbor], labels: &[usize], n_classes: usize) -> Prediction {
    let mut votes = vec![0usize; n_classes];
    let mut dist_sum = vec![0.0f64; n_classes];
    for nb in neighbors {
        let c = labels[nb.index];
        votes[c] += 1;
        dist_sum[c] += nb.distance;
    }
    let winner = (0..n_classes)
        .min_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then(dist_sum[a].total_cmp(&dist_sum[b]))
                .then(a.cmp(&b))
        })
        .unwrap_or(0);
    let m = neighbors.len() as f64;
    Prediction {
        class_probs: votes.iter().map(|&v| v as f64 / m).collect(),
        votes,
        winner,
    }
}

fn check_query(model: &ModelSpec, train: &Dataset, query: &[f64]) -> Result<()> {
    model.validate(train.n_features())?;
    if query.len() != train.n_features() {
        return Err(Error::LengthMismatch {
            expected: train.n_features(),
            found: query.len(),
        });
    }
    Ok(())
}

/// Nearest training vectors to `query`, closest first, ties by row index.
/// `exclude` removes one training row (leave-one-out).
pub fn neighbors(
    model: &ModelSpec,
    train: &Dataset,
    query: &[f64],
    exclude: Option<usize>,
) -> Result<Vec<Neighbor>> {
    check_query(model, train, query)?;
    let metric = model.metric();
    let distances = train
        .rows()
        .map(|row| dissimilarity(&metric, query, row))
        .collect::<Result<Vec<_>>>()?;
    select_neighbors(&distances, model.k, exclude, model.ties)
}

pub fn classify(
    model: &ModelSpec,
    train: &Dataset,
    query: &[f64],
    exclude: Option<usize>,
) -> Result<Prediction> {
    let nbs = neighbors(model, train, query, exclude)?;
    Ok(vote(&nbs, train.labels(), train.n_classes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, FeatureSpec};

    fn line(points: &[(f64, usize)]) -> Dataset {
        Dataset::new(
            vec![FeatureSpec::continuous("x", 0)],
            points.iter().map(|p| vec![p.0]).collect(),
            points.iter().map(|p| p.1).collect(),
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    }

    fn manhattan(k: usize, ties: NeighborTies) -> ModelSpec {
        ModelSpec::reference(1)
            .with_kind(DistanceKind::MANHATTAN)
            .with_k(k)
            .with_ties(ties)
    }

    #[test]
    fn nearest_point() {
        let d = line(&[(0.0, 0), (1.0, 0), (2.0, 1)]);
        let nb = neighbors(&manhattan(1, NeighborTies::Exact), &d, &[1.9], None).unwrap();
        assert_eq!(nb.len(), 1);
        assert_eq!(nb[0].index, 2);
        assert!((nb[0].distance - 0.1).abs() < 1e-12);

        let nb = neighbors(&manhattan(3, NeighborTies::Exact), &d, &[1.9], None).unwrap();
        let idx: Vec<usize> = nb.iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![2, 1, 0]);
    }

    #[test]
    fn cutoff_ties() {
        let d = line(&[(0.0, 0), (2.0, 1), (4.0, 0)]);
        let exact = neighbors(&manhattan(1, NeighborTies::Exact), &d, &[3.0], None).unwrap();
        assert_eq!(exact.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1]);
        let incl = neighbors(&manhattan(1, NeighborTies::Include), &d, &[3.0], None).unwrap();
        assert_eq!(incl.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn exclusion_and_k_limit() {
        let d = line(&[(0.0, 0), (1.0, 1)]);
        let nb = neighbors(&manhattan(1, NeighborTies::Exact), &d, &[0.0], Some(0)).unwrap();
        assert_eq!(nb[0].index, 1);
        let err = neighbors(&manhattan(2, NeighborTies::Exact), &d, &[0.0], Some(0)).unwrap_err();
        assert!(matches!(err, Error::KTooLarge { k: 2, available: 1 }));
    }

    #[test]
    fn vote_fractions() {
        let d = line(&[(0.0, 0), (1.0, 0), (2.0, 1)]);
        let p = classify(&manhattan(3, NeighborTies::Exact), &d, &[0.5], None).unwrap();
        assert_eq!(p.winner, 0);
        assert!((p.class_probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.class_probs[1] - 1.0 / 3.0).abs() < 1e-15);

        let p = classify(&manhattan(1, NeighborTies::Exact), &d, &[1.8], None).unwrap();
        assert_eq!((p.winner, p.class_probs.clone()), (1, vec![0.0, 1.0]));
    }

    #[test]
    fn class_tie_goes_to_smaller_distance_sum() {
        // A at 0.1, B at 0.5
        let d = line(&[(1.1, 0), (1.5, 1), (9.0, 1)]);
        let p = classify(&manhattan(2, NeighborTies::Exact), &d, &[1.0], None).unwrap();
        assert_eq!(p.class_probs, vec![0.5, 0.5]);
        assert_eq!(p.winner, 0);
        // B closer this time
        let d = line(&[(1.5, 0), (1.1, 1), (9.0, 1)]);
        let p = classify(&manhattan(2, NeighborTies::Exact), &d, &[1.0], None).unwrap();
        assert_eq!(p.winner, 1);
    }

    #[test]
    fn class_tie_falls_back_to_lower_index() {
        let d = line(&[(1.0, 1), (-1.0, 0)]);
        let p = classify(&manhattan(1, NeighborTies::Include), &d, &[0.0], None).unwrap();
        assert_eq!(p.votes, vec![1, 1]);
        assert_eq!(p.winner, 0);
    }

    #[test]
    fn complexity_and_masking() {
        let m = ModelSpec::reference(4);
        assert_eq!(m.complexity_rank(), 0);
        let m = m.without_feature(1).with_k(3).with_kind(DistanceKind::Camberra);
        assert_eq!(m.full_weights(), vec![1.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.complexity_rank(), 3);
        let m = m.with_full_weights(&[0.5, 9.0, 1.0, 0.0]);
        assert_eq!(m.distance.weights, vec![0.5, 1.0, 0.0]);
        assert_eq!(m.complexity_rank(), 5);
        assert!(m.validate(4).is_ok());
        assert!(m.validate(5).is_err());
        let mut bad = ModelSpec::reference(2);
        bad.feature_mask = vec![false, false];
        bad.distance.weights.clear();
        assert!(bad.validate(2).is_err());
    }
}
