//! Single-channel model optimizers: k, distance kind, backward feature
//! elimination, and feature weighting (quantized grid search or simplex).
//!
//! Every channel scores candidates by leave-one-out on the training set and
//! moves off the reference model only on a strict gain in correct LOO
//! predictions, so a channel never returns a worse model.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::{DistanceKind, FeatureTerms};
use crate::error::{Error, Result};
use crate::eval::{leave_one_out_with, EvalReport};
use crate::knn::ModelSpec;

/// LOO scorer for one training set. Per-feature distance terms are built
/// once per distance kind and shared by every candidate.
pub struct LooEvaluator<'a> {
    train: &'a Dataset,
    terms: [OnceLock<FeatureTerms>; 4],
    evaluations: AtomicUsize,
}

fn kind_slot(kind: DistanceKind) -> usize {
    match kind {
        DistanceKind::MANHATTAN => 0,
        DistanceKind::EUCLIDEAN => 1,
        DistanceKind::Chebyshev => 2,
        DistanceKind::Camberra => 3,
    }
}

impl<'a> LooEvaluator<'a> {
    pub fn new(train: &'a Dataset) -> Self {
        LooEvaluator {
            train,
            terms: Default::default(),
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn train(&self) -> &'a Dataset {
        self.train
    }

    /// LOO runs performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn terms(&self, kind: DistanceKind) -> &FeatureTerms {
        self.terms[kind_slot(kind)].get_or_init(|| FeatureTerms::new(kind, self.train))
    }

    pub fn report(&self, model: &ModelSpec) -> Result<EvalReport> {
        model.validate(self.train.n_features())?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let matrix = self.terms(model.kind()).combine(&model.full_weights())?;
        leave_one_out_with(model, self.train, &matrix)
    }

    /// Correct LOO predictions of `model`.
    pub fn correct(&self, model: &ModelSpec) -> Result<usize> {
        Ok(self.report(model)?.correct)
    }

    /// Correct counts for several `k` sharing one distance matrix.
    fn correct_for_ks(&self, model: &ModelSpec, ks: &[usize]) -> Result<Vec<usize>> {
        model.validate(self.train.n_features())?;
        let matrix = self.terms(model.kind()).combine(&model.full_weights())?;
        self.evaluations.fetch_add(ks.len(), Ordering::Relaxed);
        ks.par_iter()
            .map(|&k| {
                let m = model.clone().with_k(k);
                Ok(leave_one_out_with(&m, self.train, &matrix)?.correct)
            })
            .collect()
    }

    fn accuracy(&self, correct: usize) -> f64 {
        correct as f64 / self.train.len() as f64
    }
}

/// Per-channel record of what was tried, kept for traces and checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "channel")]
pub enum ChannelDetail {
    K {
        /// (k, correct)
        scores: Vec<(usize, usize)>,
    },
    Distance {
        scores: Vec<(DistanceKind, usize)>,
    },
    Features {
        expansions: Vec<FeatureExpansion>,
    },
    Weights {
        /// Expanded (best-first) or accepted (hill-climb, cyclic) weight vectors.
        path: Vec<(Vec<f64>, usize)>,
    },
    Simplex {
        iterations: usize,
        budget_exhausted: bool,
    },
}

/// One expanded feature subset with the score of every single-feature drop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExpansion {
    pub active: Vec<usize>,
    pub correct: usize,
    /// (dropped feature, correct)
    pub drops: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelResult {
    pub model: ModelSpec,
    /// LOO accuracy of `model`.
    pub train_score: f64,
    pub correct: usize,
    /// LOO runs spent inside the channel.
    pub evaluations: usize,
    pub detail: ChannelDetail,
}

impl ChannelResult {
    pub fn improved_on(&self, reference: &ModelSpec) -> bool {
        &self.model != reference
    }
}

/// Consecutive non-improving expansions tolerated by best-first search.
pub const DEFAULT_STALE: usize = 5;

/// Search over feature subsets for backward elimination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "search")]
pub enum FeatureSearch {
    /// Expand the best unexpanded subset, children drop one feature each;
    /// stop after `stale` expansions in a row without a new best score.
    BestFirst { stale: usize },
    /// Commit the best single drop while it strictly improves.
    Greedy,
}

impl Default for FeatureSearch {
    fn default() -> Self {
        FeatureSearch::BestFirst { stale: DEFAULT_STALE }
    }
}

/// Search over the weight grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "search")]
pub enum GridSearch {
    /// Expand the best unexpanded weight vector, children change one weight
    /// to any other grid value; stop after `stale` expansions in a row
    /// without a new best score.
    BestFirst { stale: usize },
    /// Commit the best single-weight change while it strictly improves
    /// (ties: lower feature, then smaller weight).
    HillClimb,
    /// Features in index order; for each, commit the best grid value if it
    /// strictly improves (ties: smaller weight). Repeat until a full cycle
    /// changes nothing.
    Cyclic,
}

impl Default for GridSearch {
    fn default() -> Self {
        GridSearch::BestFirst { stale: DEFAULT_STALE }
    }
}

/// Where the weight search starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightStart {
    /// All active weights 0.
    #[default]
    Zero,
    /// The reference weights, snapped to the grid.
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedSearch {
    pub step: f64,
    pub search: GridSearch,
    pub start: WeightStart,
}

impl Default for QuantizedSearch {
    fn default() -> Self {
        QuantizedSearch {
            step: 0.1,
            search: GridSearch::default(),
            start: WeightStart::default(),
        }
    }
}

fn check_stale(stale: usize) -> Result<()> {
    if stale == 0 {
        return Err(Error::InvalidModel("stale limit must be at least 1".into()));
    }
    Ok(())
}

struct Expanded<S> {
    node: S,
    correct: usize,
    children: Vec<(S, usize)>,
}

/// Open-list best-first search maximizing `score`. The node to expand is
/// the best open one (ties: lower `cost`, then earlier discovery); the best
/// node seen wins by score, then by lower cost. Every node is scored once.
fn best_first<S, F, C, K>(
    start: S,
    start_correct: usize,
    score: F,
    children: C,
    cost: K,
    stale_limit: usize,
) -> Result<(S, usize, Vec<Expanded<S>>)>
where
    S: Clone + Eq + Hash + Send + Sync,
    F: Fn(&S) -> Result<usize> + Sync,
    C: Fn(&S) -> Vec<S>,
    K: Fn(&S) -> usize,
{
    let mut known: HashMap<S, usize> = HashMap::new();
    known.insert(start.clone(), start_correct);
    let mut open = vec![(start.clone(), start_correct)];
    let mut best = (start, start_correct);
    let mut expanded = Vec::new();
    let mut stale = 0;
    while stale < stale_limit && !open.is_empty() {
        let pick = (0..open.len())
            .reduce(|a, b| {
                let better = open[b].1 > open[a].1 || (open[b].1 == open[a].1 && cost(&open[b].0) < cost(&open[a].0));
                if better { b } else { a }
            })
            .unwrap();
        let (node, correct) = open.remove(pick);
        let kids = children(&node);
        let fresh: Vec<S> = kids.iter().filter(|k| !known.contains_key(*k)).cloned().collect::<Vec<_>>();
        let mut fresh_unique: Vec<S> = Vec::with_capacity(fresh.len());
        for k in fresh {
            if !fresh_unique.contains(&k) {
                fresh_unique.push(k);
            }
        }
        let scores = fresh_unique.par_iter().map(&score).collect::<Result<Vec<_>>>()?;
        let mut improved = false;
        for (k, c) in fresh_unique.into_iter().zip(scores) {
            if c > best.1 || (c == best.1 && cost(&k) < cost(&best.0)) {
                improved |= c > best.1;
                best = (k.clone(), c);
            }
            known.insert(k.clone(), c);
            open.push((k, c));
        }
        let children = kids.into_iter().map(|k| { let c = known[&k]; (k, c) }).collect();
        expanded.push(Expanded { node, correct, children });
        stale = if improved { 0 } else { stale + 1 };
    }
    Ok((best.0, best.1, expanded))
}

/// `reference` restricted to the features set in `mask`.
fn restrict(reference: &ModelSpec, mask: &[bool]) -> ModelSpec {
    reference
        .active_features()
        .into_iter()
        .filter(|&f| !mask[f])
        .fold(reference.clone(), |m, f| m.without_feature(f))
}

/// Grid `{0, step, 2 step, ..., 1}`.
pub fn weight_grid(step: f64) -> Result<Vec<f64>> {
    let m = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || ((m * step) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("step {step} does not divide 1")));
    }
    let m = m as usize;
    Ok((0..=m).map(|j| j as f64 / m as f64).collect())
}

pub struct Optimizer<'a> {
    eval: LooEvaluator<'a>,
}

impl<'a> Optimizer<'a> {
    pub fn new(train: &'a Dataset) -> Self {
        Optimizer {
            eval: LooEvaluator::new(train),
        }
    }

    pub fn evaluator(&self) -> &LooEvaluator<'a> {
        &self.eval
    }

    fn finish(&self, model: ModelSpec, correct: usize, start: usize, detail: ChannelDetail) -> ChannelResult {
        ChannelResult {
            train_score: self.eval.accuracy(correct),
            model,
            correct,
            evaluations: self.eval.evaluations() - start,
            detail,
        }
    }

    /// LOO-score every k in `[k1, k2]`; keep the smallest k with the top score.
    pub fn optimize_k(&self, reference: &ModelSpec, k1: usize, k2: usize) -> Result<ChannelResult> {
        if k1 == 0 || k1 > k2 {
            return Err(Error::EmptyRange(k1, k2));
        }
        let available = self.eval.train().len().saturating_sub(1);
        if k2 > available {
            return Err(Error::KTooLarge { k: k2, available });
        }
        let start = self.eval.evaluations();
        let mut ks: Vec<usize> = (k1..=k2).collect();
        let ref_in_range = ks.contains(&reference.k);
        if !ref_in_range {
            ks.push(reference.k);
        }
        let correct = self.eval.correct_for_ks(reference, &ks)?;
        let ref_correct = correct[ks.iter().position(|&k| k == reference.k).unwrap()];
        let scores: Vec<(usize, usize)> = ks.iter().copied().zip(correct).take(k2 - k1 + 1).collect();
        let (best_k, best) = scores
            .iter()
            .copied()
            .fold((0, 0), |acc, (k, c)| if c > acc.1 || acc.0 == 0 { (k, c) } else { acc });
        let detail = ChannelDetail::K { scores };
        if best > ref_correct {
            Ok(self.finish(reference.clone().with_k(best_k), best, start, detail))
        } else {
            Ok(self.finish(reference.clone(), ref_correct, start, detail))
        }
    }

    /// LOO-score each candidate kind with everything else fixed.
    pub fn optimize_distance(&self, reference: &ModelSpec, kinds: &[DistanceKind]) -> Result<ChannelResult> {
        if kinds.is_empty() {
            return Err(Error::InvalidModel("no candidate distance kinds".into()));
        }
        let start = self.eval.evaluations();
        let mut candidates = kinds.to_vec();
        if !candidates.contains(&reference.kind()) {
            candidates.push(reference.kind());
        }
        let correct = candidates
            .par_iter()
            .map(|&kind| self.eval.correct(&reference.clone().with_kind(kind)))
            .collect::<Result<Vec<_>>>()?;
        let ref_correct = correct[candidates.iter().position(|&k| k == reference.kind()).unwrap()];
        let scores: Vec<(DistanceKind, usize)> =
            candidates.iter().copied().zip(correct).take(kinds.len()).collect();
        let (best_kind, best) = scores
            .iter()
            .copied()
            .reduce(|acc, s| if s.1 > acc.1 { s } else { acc })
            .unwrap();
        let detail = ChannelDetail::Distance { scores };
        if best > ref_correct {
            Ok(self.finish(reference.clone().with_kind(best_kind), best, start, detail))
        } else {
            Ok(self.finish(reference.clone(), ref_correct, start, detail))
        }
    }

    /// Backward elimination with the default best-first search.
    pub fn select_features(&self, reference: &ModelSpec) -> Result<ChannelResult> {
        self.select_features_with(reference, FeatureSearch::default())
    }

    /// Backward elimination from the reference's active features. At least
    /// one feature always remains; ties go to the smaller subset, then to
    /// dropping the lower feature index.
    pub fn select_features_with(&self, reference: &ModelSpec, search: FeatureSearch) -> Result<ChannelResult> {
        let start = self.eval.evaluations();
        let ref_correct = self.eval.correct(reference)?;
        let (model, correct, expansions) = match search {
            FeatureSearch::BestFirst { stale } => {
                check_stale(stale)?;
                let children = |mask: &Vec<bool>| {
                    let active: Vec<usize> = (0..mask.len()).filter(|&f| mask[f]).collect();
                    if active.len() < 2 {
                        return Vec::new();
                    }
                    active
                        .into_iter()
                        .map(|f| {
                            let mut m = mask.clone();
                            m[f] = false;
                            m
                        })
                        .collect()
                };
                let (mask, correct, expanded) = best_first(
                    reference.feature_mask.clone(),
                    ref_correct,
                    |mask: &Vec<bool>| self.eval.correct(&restrict(reference, mask)),
                    children,
                    |mask: &Vec<bool>| mask.iter().filter(|&&on| on).count(),
                    stale,
                )?;
                let expansions = expanded
                    .into_iter()
                    .map(|e| FeatureExpansion {
                        active: (0..e.node.len()).filter(|&f| e.node[f]).collect(),
                        correct: e.correct,
                        drops: e
                            .children
                            .into_iter()
                            .map(|(child, c)| ((0..child.len()).find(|&f| e.node[f] && !child[f]).unwrap(), c))
                            .collect(),
                    })
                    .collect();
                (restrict(reference, &mask), correct, expansions)
            }
            FeatureSearch::Greedy => {
                let mut current = reference.clone();
                let mut current_correct = ref_correct;
                let mut expansions = Vec::new();
                while current.n_active() >= 2 {
                    let active = current.active_features();
                    let drops = active
                        .par_iter()
                        .map(|&f| Ok((f, self.eval.correct(&current.without_feature(f))?)))
                        .collect::<Result<Vec<_>>>()?;
                    let (drop, best) = drops
                        .iter()
                        .copied()
                        .reduce(|acc, s| if s.1 > acc.1 { s } else { acc })
                        .unwrap();
                    expansions.push(FeatureExpansion {
                        active,
                        correct: current_correct,
                        drops,
                    });
                    if best <= current_correct {
                        break;
                    }
                    current = current.without_feature(drop);
                    current_correct = best;
                }
                (current, current_correct, expansions)
            }
        };
        let detail = ChannelDetail::Features { expansions };
        if correct > ref_correct {
            Ok(self.finish(model, correct, start, detail))
        } else {
            Ok(self.finish(reference.clone(), ref_correct, start, detail))
        }
    }

    /// Search the active features' weights over the grid `{0, step, ..., 1}`.
    pub fn weight_search_quantized(&self, reference: &ModelSpec, config: &QuantizedSearch) -> Result<ChannelResult> {
        let grid = weight_grid(config.step)?;
        let top = (grid.len() - 1) as u32;
        let start = self.eval.evaluations();
        let ref_correct = self.eval.correct(reference)?;
        let with = |levels: &[u32]| {
            let mut m = reference.clone();
            m.distance.weights = levels.iter().map(|&l| grid[l as usize]).collect();
            m
        };
        let score = |levels: &Vec<u32>| self.eval.correct(&with(levels));
        let init: Vec<u32> = match config.start {
            WeightStart::Zero => vec![0; reference.n_active()],
            WeightStart::Reference => reference
                .distance
                .weights
                .iter()
                .map(|&w| (w.clamp(0.0, 1.0) * top as f64).round() as u32)
                .collect(),
        };
        let init_correct = if with(&init) == *reference { ref_correct } else { score(&init)? };
        let neighbors = |levels: &Vec<u32>| -> Vec<Vec<u32>> {
            (0..levels.len())
                .flat_map(|i| {
                    (0..=top).filter(move |&v| v != levels[i]).map(move |v| {
                        let mut n = levels.clone();
                        n[i] = v;
                        n
                    })
                })
                .collect()
        };
        let (levels, correct, path) = match config.search {
            GridSearch::BestFirst { stale } => {
                check_stale(stale)?;
                let cost = |levels: &Vec<u32>| levels.iter().filter(|&&l| l != top).count();
                let (levels, correct, expanded) = best_first(init, init_correct, score, neighbors, cost, stale)?;
                let path = expanded.into_iter().map(|e| (e.node, e.correct)).collect();
                (levels, correct, path)
            }
            GridSearch::HillClimb => {
                let (mut levels, mut correct) = (init, init_correct);
                let mut path = vec![(levels.clone(), correct)];
                loop {
                    let candidates = neighbors(&levels);
                    let scores = candidates.par_iter().map(score).collect::<Result<Vec<_>>>()?;
                    match candidates.into_iter().zip(scores).reduce(|a, b| if b.1 > a.1 { b } else { a }) {
                        Some((n, c)) if c > correct => {
                            levels = n;
                            correct = c;
                            path.push((levels.clone(), correct));
                        }
                        _ => break,
                    }
                }
                (levels, correct, path)
            }
            GridSearch::Cyclic => {
                let (mut levels, mut correct) = (init, init_correct);
                let mut path = vec![(levels.clone(), correct)];
                loop {
                    let mut changed = false;
                    for i in 0..levels.len() {
                        let candidates: Vec<Vec<u32>> = (0..=top)
                            .map(|v| {
                                let mut n = levels.clone();
                                n[i] = v;
                                n
                            })
                            .collect();
                        let scores = candidates.par_iter().map(score).collect::<Result<Vec<_>>>()?;
                        let (n, c) = candidates
                            .into_iter()
                            .zip(scores)
                            .reduce(|a, b| if b.1 > a.1 { b } else { a })
                            .unwrap();
                        if c > correct {
                            levels = n;
                            correct = c;
                            path.push((levels.clone(), correct));
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                (levels, correct, path)
            }
        };
        let path = path
            .into_iter()
            .map(|(l, c)| (with(&l).distance.weights, c))
            .collect();
        let detail = ChannelDetail::Weights { path };
        if correct > ref_correct {
            Ok(self.finish(with(&levels), correct, start, detail))
        } else {
            Ok(self.finish(reference.clone(), ref_correct, start, detail))
        }
    }

    /// Nelder-Mead over the active weights, minimizing LOO errors with ties
    /// broken by the smaller L1 norm. Weights are clamped at zero after each
    /// move. Stops when `budget` LOO runs are spent or the simplex shrinks
    /// below a 1e-3 diameter, returning the best vertex ever seen.
    pub fn weight_search_simplex(&self, reference: &ModelSpec, budget: usize) -> Result<ChannelResult> {
        let dim = reference.n_active();
        if budget < dim + 1 {
            return Err(Error::InvalidModel(format!(
                "simplex budget {budget} below the {} evaluations of the initial simplex",
                dim + 1
            )));
        }
        let start = self.eval.evaluations();
        let mut simplex = Simplex {
            eval: &self.eval,
            reference,
            budget,
            spent: 0,
            best: None,
        };
        let outcome = simplex.run(dim)?;
        let (best_w, best_cost) = simplex.best.clone().expect("initial simplex evaluated");
        let ref_cost = simplex_cost_of(self.eval.train().len(), self.eval.correct(reference)?, &reference.distance.weights);
        let detail = ChannelDetail::Simplex {
            iterations: outcome.iterations,
            budget_exhausted: outcome.budget_exhausted,
        };
        if best_cost.errors < ref_cost.errors {
            let mut m = reference.clone();
            m.distance.weights = best_w;
            let correct = self.eval.train().len() - best_cost.errors;
            Ok(self.finish(m, correct, start, detail))
        } else {
            let correct = self.eval.train().len() - ref_cost.errors;
            Ok(self.finish(reference.clone(), correct, start, detail))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SimplexCost {
    errors: usize,
    l1: f64,
}

impl SimplexCost {
    fn better_than(&self, other: &SimplexCost) -> bool {
        self.errors < other.errors || (self.errors == other.errors && self.l1 < other.l1)
    }

    fn cmp(&self, other: &SimplexCost) -> std::cmp::Ordering {
        self.errors
            .cmp(&other.errors)
            .then(self.l1.total_cmp(&other.l1))
    }
}

fn simplex_cost_of(n: usize, correct: usize, w: &[f64]) -> SimplexCost {
    SimplexCost {
        errors: n - correct,
        l1: w.iter().sum(),
    }
}

struct SimplexOutcome {
    iterations: usize,
    budget_exhausted: bool,
}

struct Simplex<'e, 'a> {
    eval: &'e LooEvaluator<'a>,
    reference: &'e ModelSpec,
    budget: usize,
    spent: usize,
    best: Option<(Vec<f64>, SimplexCost)>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MIN_DIAMETER: f64 = 1e-3;

impl Simplex<'_, '_> {
    /// `None` once the budget is spent.
    fn cost(&mut self, w: &[f64]) -> Result<Option<SimplexCost>> {
        if self.spent >= self.budget {
            return Ok(None);
        }
        self.spent += 1;
        let mut m = self.reference.clone();
        m.distance.weights = w.to_vec();
        let c = simplex_cost_of(self.eval.train().len(), self.eval.correct(&m)?, w);
        if self.best.as_ref().is_none_or(|(_, b)| c.better_than(b)) {
            self.best = Some((w.to_vec(), c));
        }
        Ok(Some(c))
    }

    fn run(&mut self, dim: usize) -> Result<SimplexOutcome> {
        let clamp = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<f64>>();
        let x0 = self.reference.distance.weights.clone();
        let mut vertices: Vec<(Vec<f64>, SimplexCost)> = Vec::with_capacity(dim + 1);
        let mut points = vec![x0.clone()];
        for i in 0..dim {
            let mut x = x0.clone();
            x[i] += 0.5;
            points.push(x);
        }
        for p in points {
            let c = self.cost(&p)?.expect("budget covers the initial simplex");
            vertices.push((p, c));
        }
        let mut iterations = 0;
        let exhausted = |iterations| {
            Ok(SimplexOutcome {
                iterations,
                budget_exhausted: true,
            })
        };
        loop {
            vertices.sort_by(|a, b| a.1.cmp(&b.1));
            let diameter = vertices[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&vertices[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diameter < MIN_DIAMETER {
                return Ok(SimplexOutcome {
                    iterations,
                    budget_exhausted: false,
                });
            }
            if self.spent >= self.budget {
                return exhausted(iterations);
            }
            iterations += 1;

            let worst = vertices[dim].clone();
            let centroid: Vec<f64> = (0..dim)
                .map(|j| vertices[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
                .collect();
            let toward = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
                from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
            };

            let xr = clamp(toward(&centroid, &worst.0, -REFLECT));
            let Some(fr) = self.cost(&xr)? else {
                return exhausted(iterations);
            };
            if fr.cmp(&vertices[0].1).is_lt() {
                let xe = clamp(toward(&centroid, &xr, EXPAND));
                let Some(fe) = self.cost(&xe)? else {
                    vertices[dim] = (xr, fr);
                    return exhausted(iterations);
                };
                vertices[dim] = if fe.cmp(&fr).is_lt() { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr.cmp(&vertices[dim - 1].1).is_lt() {
                vertices[dim] = (xr, fr);
                continue;
            }
            let (xc, outside) = if fr.cmp(&worst.1).is_lt() {
                (clamp(toward(&centroid, &xr, CONTRACT)), true)
            } else {
                (clamp(toward(&centroid, &worst.0, CONTRACT)), false)
            };
            let Some(fc) = self.cost(&xc)? else {
                return exhausted(iterations);
            };
            let accept = if outside {
                !fr.cmp(&fc).is_lt()
            } else {
                fc.cmp(&worst.1).is_lt()
            };
            if accept {
                vertices[dim] = (xc, fc);
                continue;
            }
            let best = vertices[0].0.clone();
            for v in vertices.iter_mut().skip(1) {
                let x = clamp(toward(&best, &v.0, SHRINK));
                let Some(c) = self.cost(&x)? else {
                    return exhausted(iterations);
                };
                *v = (x, c);
            }
        }
    }
}

pub fn optimize_k(reference: &ModelSpec, train: &Dataset, k1: usize, k2: usize) -> Result<ChannelResult> {
    Optimizer::new(train).optimize_k(reference, k1, k2)
}

pub fn optimize_distance(reference: &ModelSpec, train: &Dataset, kinds: &[DistanceKind]) -> Result<ChannelResult> {
    Optimizer::new(train).optimize_distance(reference, kinds)
}

pub fn select_features(reference: &ModelSpec, train: &Dataset, search: FeatureSearch) -> Result<ChannelResult> {
    Optimizer::new(train).select_features_with(reference, search)
}

pub fn weight_search_quantized(
    reference: &ModelSpec,
    train: &Dataset,
    config: &QuantizedSearch,
) -> Result<ChannelResult> {
    Optimizer::new(train).weight_search_quantized(reference, config)
}

pub fn weight_search_simplex(reference: &ModelSpec, train: &Dataset, budget: usize) -> Result<ChannelResult> {
    Optimizer::new(train).weight_search_simplex(reference, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, FeatureSpec};
    use crate::eval::leave_one_out;

    fn dataset(rows: &[(&[f64], usize)]) -> Dataset {
        let n = rows[0].0.len();
        Dataset::new(
            (0..n).map(|i| FeatureSpec::continuous(format!("x{i}"), i)).collect(),
            rows.iter().map(|r| r.0.to_vec()).collect(),
            rows.iter().map(|r| r.1).collect(),
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    }

    fn separable() -> Dataset {
        dataset(&[
            (&[0.0], 0),
            (&[0.1], 0),
            (&[0.2], 0),
            (&[5.0], 1),
            (&[5.1], 1),
            (&[5.2], 1),
        ])
    }

    #[test]
    fn grid_values() {
        let g = weight_grid(0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[1], g[10]), (0.0, 0.1, 1.0));
        assert!(weight_grid(0.3).is_err());
        assert!(weight_grid(0.0).is_err());
    }

    #[test]
    fn k_smallest_on_perfect() {
        let d = separable();
        let r = optimize_k(&ModelSpec::reference(1), &d, 1, 2).unwrap();
        assert_eq!((r.model.k, r.correct), (1, 6));
        assert!(matches!(optimize_k(&ModelSpec::reference(1), &d, 3, 2), Err(Error::EmptyRange(3, 2))));
        assert!(matches!(optimize_k(&ModelSpec::reference(1), &d, 1, 6), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn single_candidate_distance() {
        let d = separable();
        let reference = ModelSpec::reference(1);
        let r = optimize_distance(&reference, &d, &[DistanceKind::EUCLIDEAN]).unwrap();
        assert_eq!(r.model, reference);
    }

    #[test]
    fn identical_features_keep_mask() {
        let d = dataset(&[
            (&[0.0, 0.0], 0),
            (&[1.0, 1.0], 0),
            (&[3.0, 3.0], 1),
            (&[4.0, 4.0], 1),
            (&[2.0, 2.0], 1),
        ]);
        let reference = ModelSpec::reference(2);
        for search in [FeatureSearch::default(), FeatureSearch::Greedy] {
            let r = select_features(&reference, &d, search).unwrap();
            assert_eq!(r.model, reference);
            assert_eq!(r.correct, leave_one_out(&reference, &d).unwrap().correct);
        }
    }

    #[test]
    fn single_feature_weights_unchanged() {
        let d = separable();
        let reference = ModelSpec::reference(1);
        for search in [GridSearch::default(), GridSearch::HillClimb, GridSearch::Cyclic] {
            for start in [WeightStart::Zero, WeightStart::Reference] {
                let config = QuantizedSearch { step: 0.1, search, start };
                let r = weight_search_quantized(&reference, &d, &config).unwrap();
                assert_eq!(r.model.distance.weights, vec![1.0]);
            }
        }
    }

    #[test]
    fn simplex_initial_only() {
        let d = dataset(&[
            (&[0.0, 3.0], 0),
            (&[1.0, 0.0], 0),
            (&[3.0, 1.0], 1),
            (&[4.0, 4.0], 1),
            (&[2.0, 2.0], 1),
        ]);
        let reference = ModelSpec::reference(2);
        let r = weight_search_simplex(&reference, &d, 3).unwrap();
        assert_eq!(r.evaluations, 4);
        assert!(matches!(r.detail, ChannelDetail::Simplex { budget_exhausted: true, iterations: 0 }));
        // best initial vertex: reference, (1.5, 1) or (1, 1.5)
        let best = [vec![1.0, 1.0], vec![1.5, 1.0], vec![1.0, 1.5]]
            .into_iter()
            .map(|w| {
                let mut m = reference.clone();
                m.distance.weights = w;
                leave_one_out(&m, &d).unwrap().correct
            })
            .max()
            .unwrap();
        assert_eq!(r.correct, best);
        assert!(weight_search_simplex(&reference, &d, 2).is_err());
    }

    #[test]
    fn simplex_plateau_terminates() {
        // identical vectors: every weight vector gives the same distances
        let d = dataset(&[(&[1.0, 1.0], 0), (&[1.0, 1.0], 1), (&[1.0, 1.0], 0), (&[1.0, 1.0], 1)]);
        let reference = ModelSpec::reference(2);
        let r = weight_search_simplex(&reference, &d, 10_000).unwrap();
        match r.detail {
            ChannelDetail::Simplex { budget_exhausted, .. } => assert!(!budget_exhausted),
            ref other => panic!("{other:?}"),
        }
        assert!(r.evaluations < 10_000);
        assert_eq!(r.model, reference);
    }
}
