//! Leave-one-out and train/test evaluation, confusion matrices.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::{pairwise_matrix, DistanceMatrix};
use crate::error::{Error, Result};
use crate::knn::{classify, select_neighbors, vote, ModelSpec, Prediction};

/// `K x K` counts, rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<usize>>", from = "Vec<Vec<usize>>")]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> usize {
        (0..self.n_classes).map(|c| self.get(truth, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        self.counts
            .chunks(self.n_classes.max(1))
            .map(<[usize]>::to_vec)
            .collect()
    }
}

impl From<ConfusionMatrix> for Vec<Vec<usize>> {
    fn from(m: ConfusionMatrix) -> Self {
        m.rows()
    }
}

impl From<Vec<Vec<usize>>> for ConfusionMatrix {
    fn from(rows: Vec<Vec<usize>>) -> Self {
        ConfusionMatrix {
            n_classes: rows.len(),
            counts: rows.into_iter().flatten().collect(),
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    /// Row-major, right-aligned columns, one true class per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .counts
            .iter()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1);
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorOutcome {
    pub truth: usize,
    pub prediction: Prediction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: ModelSpec,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_vector: Vec<VectorOutcome>,
    pub confusion: ConfusionMatrix,
}

/// Serialized form of an [`EvalReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub confusion: ConfusionMatrix,
    pub model: ModelSpec,
}

impl EvalReport {
    pub fn from_outcomes(model: ModelSpec, n_classes: usize, per_vector: Vec<VectorOutcome>) -> Self {
        let mut confusion = ConfusionMatrix::new(n_classes);
        for o in &per_vector {
            confusion.add(o.truth, o.prediction.winner);
        }
        let correct = confusion.trace();
        let total = per_vector.len();
        EvalReport {
            model,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            correct,
            total,
            per_vector,
            confusion,
        }
    }

    /// Accuracy as a percentage.
    pub fn percent(&self) -> f64 {
        100.0 * self.accuracy
    }

    /// Predicted class of every vector, in row order.
    pub fn winners(&self) -> Vec<usize> {
        self.per_vector.iter().map(|o| o.prediction.winner).collect()
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            accuracy: self.accuracy,
            correct: self.correct,
            total: self.total,
            confusion: self.confusion.clone(),
            model: self.model.clone(),
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}% ({}/{})", self.percent(), self.correct, self.total)
    }
}

pub fn confusion_of(report: &EvalReport) -> ConfusionMatrix {
    report.confusion.clone()
}

/// Leave-one-out over a precomputed distance matrix of `train`.
pub fn leave_one_out_with(
    model: &ModelSpec,
    train: &Dataset,
    matrix: &DistanceMatrix,
) -> Result<EvalReport> {
    model.validate(train.n_features())?;
    let n = train.len();
    if matrix.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: matrix.len(),
        });
    }
    if n < 2 || model.k > n - 1 {
        return Err(Error::KTooLarge {
            k: model.k,
            available: n.saturating_sub(1),
        });
    }
    let per_vector = (0..n)
        .into_par_iter()
        .map(|p| {
            let nbs = select_neighbors(matrix.row(p), model.k, Some(p), model.ties)?;
            Ok(VectorOutcome {
                truth: train.label(p),
                prediction: vote(&nbs, train.labels(), train.n_classes()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_outcomes(model.clone(), train.n_classes(), per_vector))
}

/// Classify every training vector against the others.
pub fn leave_one_out(model: &ModelSpec, train: &Dataset) -> Result<EvalReport> {
    model.validate(train.n_features())?;
    let matrix = pairwise_matrix(&model.metric(), train)?;
    leave_one_out_with(model, train, &matrix)
}

/// Classify every test vector against the whole training set.
pub fn evaluate(model: &ModelSpec, train: &Dataset, test: &Dataset) -> Result<EvalReport> {
    if !train.same_schema(test) {
        return Err(Error::SchemaMismatch(
            "train and test differ in features or class names".into(),
        ));
    }
    let per_vector = (0..test.len())
        .into_par_iter()
        .map(|r| {
            Ok(VectorOutcome {
                truth: test.label(r),
                prediction: classify(model, train, test.row(r), None)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_outcomes(model.clone(), train.n_classes(), per_vector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSpec;

    fn outcome(truth: usize, winner: usize, k: usize) -> VectorOutcome {
        let mut votes = vec![0; k];
        votes[winner] = 1;
        VectorOutcome {
            truth,
            prediction: Prediction {
                class_probs: votes.iter().map(|&v| v as f64).collect(),
                votes,
                winner,
            },
        }
    }

    #[test]
    fn perfect_and_all_wrong() {
        let m = ModelSpec::reference(1);
        let truth: Vec<usize> = [0; 6].into_iter().chain([1; 4]).collect();
        let perfect = truth.iter().map(|&t| outcome(t, t, 2)).collect();
        let r = EvalReport::from_outcomes(m.clone(), 2, perfect);
        assert_eq!(r.confusion.rows(), vec![vec![6, 0], vec![0, 4]]);
        assert_eq!((r.correct, r.total, r.accuracy), (10, 10, 1.0));

        let wrong = truth.iter().map(|&t| outcome(t, 1 - t, 2)).collect();
        let r = EvalReport::from_outcomes(m, 2, wrong);
        assert_eq!(r.confusion.rows(), vec![vec![0, 6], vec![4, 0]]);
        assert_eq!(r.accuracy, 0.0);
    }

    #[test]
    fn three_class_fixture() {
        // (truth, predicted), counted by hand:
        //        p0 p1 p2
        //   t0 [  2  1  0 ]
        //   t1 [  0  1  1 ]
        //   t2 [  1  0  3 ]
        let pairs = [
            (0, 0), (0, 1), (0, 0),
            (1, 2), (1, 1),
            (2, 2), (2, 0), (2, 2), (2, 2),
        ];
        let r = EvalReport::from_outcomes(
            ModelSpec::reference(1),
            3,
            pairs.iter().map(|&(t, p)| outcome(t, p, 3)).collect(),
        );
        assert_eq!(
            r.confusion.rows(),
            vec![vec![2, 1, 0], vec![0, 1, 1], vec![1, 0, 3]]
        );
        assert_eq!(r.correct, 6);
        assert_eq!(r.confusion.to_string(), "2 1 0\n0 1 1\n1 0 3\n");
    }

    fn pair_dataset() -> Dataset {
        Dataset::new(
            vec![FeatureSpec::continuous("x", 0)],
            vec![vec![0.0], vec![1.0]],
            vec![0, 1],
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    }

    #[test]
    fn opposite_pair_loo_is_zero() {
        let r = leave_one_out(&ModelSpec::reference(1), &pair_dataset()).unwrap();
        assert_eq!((r.correct, r.total), (0, 2));
        let err = leave_one_out(&ModelSpec::reference(1).with_k(2), &pair_dataset()).unwrap_err();
        assert!(matches!(err, Error::KTooLarge { .. }));
    }

    #[test]
    fn copy_of_training_vector() {
        let train = pair_dataset();
        let test = train.slice(1..2).unwrap();
        let r = evaluate(&ModelSpec::reference(1), &train, &test).unwrap();
        assert_eq!((r.correct, r.total), (1, 1));
    }

    #[test]
    fn schema_mismatch() {
        let train = pair_dataset();
        let other = Dataset::new(
            vec![FeatureSpec::continuous("y", 0)],
            vec![vec![0.0]],
            vec![0],
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        assert!(matches!(
            evaluate(&ModelSpec::reference(1), &train, &other),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn summary_json_fields() {
        let r = leave_one_out(&ModelSpec::reference(1), &pair_dataset()).unwrap();
        let v = serde_json::to_value(r.summary()).unwrap();
        for key in ["accuracy", "correct", "total", "confusion", "model"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["confusion"], serde_json::json!([[0, 1], [1, 0]]));
    }
}
