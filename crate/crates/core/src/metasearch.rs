//! Level-wise meta-search over model extensions, and best-first selection
//! of a majority-voting model sequence.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::knn::{classify, ModelSpec, Prediction};
use crate::optimize::{ChannelDetail, ChannelResult, FeatureSearch, Optimizer, QuantizedSearch};

/// One family of model extensions explored from a reference model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    K,
    Distance,
    Features,
    Weights,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::K, Channel::Distance, Channel::Features, Channel::Weights];

    pub fn name(self) -> &'static str {
        match self {
            Channel::K => "k",
            Channel::Distance => "distance",
            Channel::Features => "features",
            Channel::Weights => "weights",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "k" => Ok(Channel::K),
            "distance" => Ok(Channel::Distance),
            "features" => Ok(Channel::Features),
            "weights" => Ok(Channel::Weights),
            other => Err(format!("unknown channel `{other}` (k, distance, features, weights)")),
        }
    }
}

/// How the weighting channel searches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Weighting {
    Quantized(QuantizedSearch),
    Simplex { budget: usize },
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::Quantized(QuantizedSearch::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Enabled channels, in declaration (tie-break) order.
    pub channels: Vec<Channel>,
    /// Minimum accuracy gain, as a fraction, a level must exceed.
    pub epsilon: f64,
    /// Inclusive k range; the upper end is clipped to n - 1.
    pub k_range: (usize, usize),
    pub kinds: Vec<DistanceKind>,
    pub features: FeatureSearch,
    pub weighting: Weighting,
    /// Starting model; `None` means [`ModelSpec::reference`].
    pub reference: Option<ModelSpec>,
    /// Stop after this many accepted levels.
    pub max_levels: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            channels: Channel::ALL.to_vec(),
            epsilon: 0.0,
            k_range: (1, 10),
            kinds: DistanceKind::default_candidates(),
            features: FeatureSearch::default(),
            weighting: Weighting::default(),
            reference: None,
            max_levels: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// No candidate gained more than epsilon.
    NoImprovement,
    /// Nothing left to try: perfect reference, no applicable channel, or level cap.
    ChannelExhaustion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

impl TestScore {
    fn of(model: &ModelSpec, train: &Dataset, test: Option<&Dataset>) -> Result<Option<TestScore>> {
        test.map(|t| {
            let r = evaluate(model, train, t)?;
            Ok(TestScore {
                accuracy: r.accuracy,
                correct: r.correct,
                total: r.total,
            })
        })
        .transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub channel: Channel,
    pub result: ChannelResult,
    pub complexity: usize,
    pub test: Option<TestScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "decision")]
pub enum Decision {
    Accepted { channel: Channel, train_score: f64, correct: usize },
    Stopped { reason: StopReason },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: usize,
    pub reference: ModelSpec,
    pub reference_score: f64,
    pub reference_correct: usize,
    pub reference_test: Option<TestScore>,
    pub candidates: Vec<Candidate>,
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub levels: Vec<Level>,
    /// LOO runs over the whole search.
    pub evaluations: usize,
}

/// One line of the JSON-lines trace.
#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum TraceRecord<'a> {
    Candidate {
        level: usize,
        channel: Channel,
        train_score: f64,
        correct: usize,
        complexity: usize,
        evaluations: usize,
        test: &'a Option<TestScore>,
        model: &'a ModelSpec,
        detail: &'a ChannelDetail,
    },
    Decision {
        level: usize,
        reference_score: f64,
        reference_correct: usize,
        reference_test: &'a Option<TestScore>,
        #[serde(flatten)]
        decision: &'a Decision,
    },
}

impl SearchTrace {
    pub fn accepted(&self) -> impl Iterator<Item = (&Level, Channel)> {
        self.levels.iter().filter_map(|l| match l.decision {
            Decision::Accepted { channel, .. } => Some((l, channel)),
            Decision::Stopped { .. } => None,
        })
    }

    pub fn n_accepted(&self) -> usize {
        self.accepted().count()
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        match self.levels.last()?.decision {
            Decision::Stopped { reason } => Some(reason),
            Decision::Accepted { .. } => None,
        }
    }

    pub fn candidate(&self, level: usize, channel: Channel) -> Option<&Candidate> {
        self.levels.get(level)?.candidates.iter().find(|c| c.channel == channel)
    }

    /// One JSON object per candidate evaluation and per level decision.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for level in &self.levels {
            let mut records: Vec<TraceRecord> = level
                .candidates
                .iter()
                .map(|c| TraceRecord::Candidate {
                    level: level.index,
                    channel: c.channel,
                    train_score: c.result.train_score,
                    correct: c.result.correct,
                    complexity: c.complexity,
                    evaluations: c.result.evaluations,
                    test: &c.test,
                    model: &c.result.model,
                    detail: &c.result.detail,
                })
                .collect();
            records.push(TraceRecord::Decision {
                level: level.index,
                reference_score: level.reference_score,
                reference_correct: level.reference_correct,
                reference_test: &level.reference_test,
                decision: &level.decision,
            });
            for r in records {
                out.push_str(&serde_json::to_string(&r).expect("trace records serialize"));
                out.push('\n');
            }
        }
        out
    }
}

fn run_channel(
    opt: &Optimizer,
    channel: Channel,
    reference: &ModelSpec,
    config: &SearchConfig,
) -> Result<Option<ChannelResult>> {
    let n = opt.evaluator().train().len();
    Ok(Some(match channel {
        Channel::K => {
            let (k1, k2) = config.k_range;
            let k2 = k2.min(n - 1);
            if k1 == 0 || k1 > k2 {
                return Ok(None);
            }
            opt.optimize_k(reference, k1, k2)?
        }
        Channel::Distance => opt.optimize_distance(reference, &config.kinds)?,
        Channel::Features => {
            if reference.n_active() < 2 {
                return Ok(None);
            }
            opt.select_features_with(reference, config.features)?
        }
        Channel::Weights => match config.weighting {
            Weighting::Quantized(q) => opt.weight_search_quantized(reference, &q)?,
            Weighting::Simplex { budget } => {
                if reference.n_active() < 2 {
                    return Ok(None);
                }
                opt.weight_search_simplex(reference, budget)?
            }
        },
    }))
}

/// Level-wise search: at every level each enabled channel runs from the
/// current reference, and the best candidate replaces the reference when its
/// LOO accuracy gain exceeds `epsilon`. Ties go to the lower complexity rank,
/// then to the earlier channel. `test` is scored for the trace only.
pub fn meta_search(
    train: &Dataset,
    config: &SearchConfig,
    test: Option<&Dataset>,
) -> Result<(ModelSpec, SearchTrace)> {
    if config.channels.is_empty() {
        return Err(Error::InvalidModel("no channels enabled".into()));
    }
    if train.len() < 2 {
        return Err(Error::InvalidDataset("leave-one-out needs at least 2 vectors".into()));
    }
    let opt = Optimizer::new(train);
    let mut reference = config
        .reference
        .clone()
        .unwrap_or_else(|| ModelSpec::reference(train.n_features()));
    let mut reference_correct = opt.evaluator().correct(&reference)?;
    let n = train.len() as f64;
    let mut levels = Vec::new();
    loop {
        let index = levels.len();
        let reference_test = TestScore::of(&reference, train, test)?;
        let capped = config.max_levels.is_some_and(|m| index >= m);
        let mut level = Level {
            index,
            reference: reference.clone(),
            reference_score: reference_correct as f64 / n,
            reference_correct,
            reference_test,
            candidates: Vec::new(),
            decision: Decision::Stopped {
                reason: StopReason::ChannelExhaustion,
            },
        };
        if capped || reference_correct == train.len() {
            levels.push(level);
            break;
        }
        for &channel in &config.channels {
            if let Some(result) = run_channel(&opt, channel, &reference, config)? {
                level.candidates.push(Candidate {
                    channel,
                    complexity: result.model.complexity_rank(),
                    test: TestScore::of(&result.model, train, test)?,
                    result,
                });
            }
        }
        let best = level
            .candidates
            .iter()
            .reduce(|a, b| {
                let better = b.result.correct > a.result.correct
                    || (b.result.correct == a.result.correct && b.complexity < a.complexity);
                if better { b } else { a }
            })
            .cloned();
        let Some(best) = best else {
            levels.push(level);
            break;
        };
        let gain = (best.result.correct as f64 - reference_correct as f64) / n;
        if best.result.correct > reference_correct && gain > config.epsilon {
            level.decision = Decision::Accepted {
                channel: best.channel,
                train_score: best.result.train_score,
                correct: best.result.correct,
            };
            levels.push(level);
            reference = best.result.model;
            reference_correct = best.result.correct;
        } else {
            level.decision = Decision::Stopped {
                reason: StopReason::NoImprovement,
            };
            levels.push(level);
            break;
        }
    }
    let trace = SearchTrace {
        levels,
        evaluations: opt.evaluator().evaluations(),
    };
    Ok((reference, trace))
}

/// A pool model with its predicted class for every validation vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub model: ModelSpec,
    pub predictions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceStep {
    /// Members after this step, as indices into the caller's pool.
    pub members: Vec<usize>,
    /// (pool index, joint accuracy) for every remaining model tried.
    pub joint_scores: Vec<(usize, f64)>,
    pub accepted: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSequence {
    pub members: Vec<ModelSpec>,
    /// Pool indices of `members`.
    pub pool_indices: Vec<usize>,
    pub combined_score: f64,
    pub steps: Vec<SequenceStep>,
}

/// Vote winner; ties go to the vote of the earliest member among the tied classes.
fn majority(member_votes: impl Iterator<Item = usize> + Clone, n_classes: usize) -> (usize, Vec<usize>) {
    let mut counts = vec![0usize; n_classes];
    for v in member_votes.clone() {
        counts[v] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let winner = member_votes
        .into_iter()
        .find(|&v| counts[v] == top)
        .unwrap_or(0);
    (winner, counts)
}

/// Majority-vote accuracy of the given pool members on `truth`.
pub fn joint_accuracy(pool: &[PoolEntry], members: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let n_classes = pool
        .iter()
        .flat_map(|e| e.predictions.iter())
        .chain(truth)
        .copied()
        .max()
        .unwrap_or(0)
        + 1;
    let correct = (0..truth.len())
        .filter(|&v| majority(members.iter().map(|&m| pool[m].predictions[v]), n_classes).0 == truth[v])
        .count();
    correct as f64 / truth.len() as f64
}

/// Best-first ensemble growth. The pool is ranked by decreasing accuracy,
/// the best model starts the sequence, then the model giving the best joint
/// majority-vote accuracy (ties: lower complexity, then higher rank) is added
/// while the gain exceeds `epsilon`.
pub fn select_model_sequence(pool: &[PoolEntry], truth: &[usize], epsilon: f64) -> Result<ModelSequence> {
    if pool.is_empty() {
        return Err(Error::InvalidModel("empty model pool".into()));
    }
    for e in pool {
        if e.predictions.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                found: e.predictions.len(),
            });
        }
    }
    let alone: Vec<f64> = (0..pool.len()).map(|i| joint_accuracy(pool, &[i], truth)).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        alone[b]
            .total_cmp(&alone[a])
            .then(pool[a].model.complexity_rank().cmp(&pool[b].model.complexity_rank()))
            .then(a.cmp(&b))
    });
    let mut members = vec![order[0]];
    let mut remaining: Vec<usize> = order[1..].to_vec();
    let mut score = alone[order[0]];
    let mut steps = vec![SequenceStep {
        members: members.clone(),
        joint_scores: vec![(order[0], score)],
        accepted: Some(order[0]),
    }];
    while !remaining.is_empty() {
        let joint_scores: Vec<(usize, f64)> = remaining
            .iter()
            .map(|&m| {
                let mut with = members.clone();
                with.push(m);
                (m, joint_accuracy(pool, &with, truth))
            })
            .collect();
        let (pos, &(best, best_score)) = joint_scores
            .iter()
            .enumerate()
            .reduce(|a, b| {
                let better = b.1 .1 > a.1 .1
                    || (b.1 .1 == a.1 .1
                        && pool[b.1 .0].model.complexity_rank() < pool[a.1 .0].model.complexity_rank());
                if better { b } else { a }
            })
            .unwrap();
        if best_score - score <= epsilon {
            steps.push(SequenceStep {
                members: members.clone(),
                joint_scores,
                accepted: None,
            });
            break;
        }
        members.push(best);
        remaining.remove(pos);
        score = best_score;
        steps.push(SequenceStep {
            members: members.clone(),
            joint_scores,
            accepted: Some(best),
        });
    }
    Ok(ModelSequence {
        members: members.iter().map(|&m| pool[m].model.clone()).collect(),
        pool_indices: members,
        combined_score: score,
        steps,
    })
}

/// Majority vote of the sequence members on `query`; ties go to the
/// earliest member's vote. `class_probs` are vote fractions.
pub fn ensemble_predict(seq: &ModelSequence, train: &Dataset, query: &[f64]) -> Result<Prediction> {
    if seq.members.is_empty() {
        return Err(Error::InvalidModel("empty model sequence".into()));
    }
    let member_votes = seq
        .members
        .iter()
        .map(|m| Ok(classify(m, train, query, None)?.winner))
        .collect::<Result<Vec<_>>>()?;
    let (winner, votes) = majority(member_votes.iter().copied(), train.n_classes());
    let m = member_votes.len() as f64;
    Ok(Prediction {
        class_probs: votes.iter().map(|&v| v as f64 / m).collect(),
        votes,
        winner,
    })
}

/// Every distinct model of a search trace (references and candidates), with
/// its LOO predictions on `train`.
pub fn pool_from_trace(trace: &SearchTrace, train: &Dataset) -> Result<Vec<PoolEntry>> {
    let mut models: Vec<ModelSpec> = Vec::new();
    for level in &trace.levels {
        for m in std::iter::once(&level.reference).chain(level.candidates.iter().map(|c| &c.result.model)) {
            if !models.contains(m) {
                models.push(m.clone());
            }
        }
    }
    models
        .into_iter()
        .map(|model| {
            let predictions = crate::eval::leave_one_out(&model, train)?.winners();
            Ok(PoolEntry { model, predictions })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSpec;

    fn entry(k: usize, predictions: &[usize]) -> PoolEntry {
        PoolEntry {
            model: ModelSpec::reference(1).with_k(k),
            predictions: predictions.to_vec(),
        }
    }

    #[test]
    fn single_model_pool() {
        let truth = [0, 1, 1, 0];
        let seq = select_model_sequence(&[entry(1, &[0, 1, 0, 0])], &truth, 0.0).unwrap();
        assert_eq!(seq.members.len(), 1);
        assert_eq!(seq.combined_score, 0.75);
    }

    #[test]
    fn duplicates_collapse() {
        let truth = [0, 1, 1, 0];
        let e = entry(1, &[0, 1, 0, 0]);
        let seq = select_model_sequence(&[e.clone(), e.clone(), e], &truth, 0.0).unwrap();
        assert_eq!(seq.members.len(), 1);
    }

    #[test]
    fn mismatched_pool() {
        let err = select_model_sequence(&[entry(1, &[0, 1])], &[0, 1, 1], 0.0).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn majority_tie_rule() {
        assert_eq!(majority([0, 0, 1].into_iter(), 2), (0, vec![2, 1]));
        assert_eq!(majority([1, 0].into_iter(), 2).0, 1);
        assert_eq!(majority([2, 0, 0, 1, 1].into_iter(), 3).0, 0);
    }

    fn line(points: &[(f64, usize)]) -> Dataset {
        Dataset::new(
            vec![FeatureSpec::continuous("x", 0)],
            points.iter().map(|p| vec![p.0]).collect(),
            points.iter().map(|p| p.1).collect(),
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    }

    #[test]
    fn ensemble_votes() {
        let train = line(&[(0.0, 0), (1.0, 0), (2.0, 1), (10.0, 1)]);
        let m1 = ModelSpec::reference(1);
        let m3 = m1.clone().with_k(3);
        let single = ModelSequence {
            members: vec![m1.clone()],
            pool_indices: vec![0],
            combined_score: 0.0,
            steps: vec![],
        };
        let q = [1.8];
        assert_eq!(
            ensemble_predict(&single, &train, &q).unwrap().winner,
            classify(&m1, &train, &q, None).unwrap().winner
        );
        // 1-NN says B, 3-NN says A: tie goes to the first member
        let pair = ModelSequence {
            members: vec![m1.clone(), m3.clone()],
            pool_indices: vec![0, 1],
            combined_score: 0.0,
            steps: vec![],
        };
        let p = ensemble_predict(&pair, &train, &q).unwrap();
        assert_eq!((p.winner, p.votes.clone()), (1, vec![1, 1]));
        let trio = ModelSequence {
            members: vec![m1, m3.clone(), m3],
            pool_indices: vec![0, 1, 2],
            combined_score: 0.0,
            steps: vec![],
        };
        let p = ensemble_predict(&trio, &train, &q).unwrap();
        assert_eq!(p.winner, 0);
        assert_eq!(p.class_probs, vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn perfect_reference_stops() {
        let train = line(&[(0.0, 0), (0.1, 0), (5.0, 1), (5.1, 1)]);
        let (model, trace) = meta_search(&train, &SearchConfig::default(), None).unwrap();
        assert_eq!(model, ModelSpec::reference(1));
        assert_eq!(trace.n_accepted(), 0);
        assert_eq!(trace.levels.len(), 1);
        assert_eq!(trace.stop_reason(), Some(StopReason::ChannelExhaustion));
    }
}
