//! Weighted dissimilarities between feature vectors.
//!
//! Minkowski distances are returned as the raw weighted sum
//! `sum_i s_i |x_i - y_i|^alpha`, i.e. the distance raised to `alpha`. The
//! root is monotone, so neighbor order is the same either way.
//!
//! Every kind skips terms whose weight is exactly zero. A zero weight is then
//! indistinguishable from deleting the feature, bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Minkowski exponent. Only 1 and 2 are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Alpha {
    One,
    Two,
}

impl TryFrom<u8> for Alpha {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Alpha::One),
            2 => Ok(Alpha::Two),
            other => Err(format!("alpha must be 1 or 2, got {other}")),
        }
    }
}

impl From<Alpha> for u8 {
    fn from(a: Alpha) -> u8 {
        match a {
            Alpha::One => 1,
            Alpha::Two => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistanceKind {
    Minkowski { alpha: Alpha },
    Chebyshev,
    Camberra,
}

impl DistanceKind {
    pub const MANHATTAN: DistanceKind = DistanceKind::Minkowski { alpha: Alpha::One };
    pub const EUCLIDEAN: DistanceKind = DistanceKind::Minkowski { alpha: Alpha::Two };

    /// Candidate order used by distance selection.
    pub fn default_candidates() -> Vec<DistanceKind> {
        vec![
            DistanceKind::MANHATTAN,
            DistanceKind::EUCLIDEAN,
            DistanceKind::Chebyshev,
            DistanceKind::Camberra,
        ]
    }

    pub fn alpha(self) -> Option<Alpha> {
        match self {
            DistanceKind::Minkowski { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Whether per-feature terms combine by summation (as opposed to max).
    fn is_additive(self) -> bool {
        !matches!(self, DistanceKind::Chebyshev)
    }

    #[inline]
    fn term(self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self {
            DistanceKind::Minkowski { alpha: Alpha::One } | DistanceKind::Chebyshev => d,
            DistanceKind::Minkowski { alpha: Alpha::Two } => d * d,
            DistanceKind::Camberra => {
                let s = a.abs() + b.abs();
                if s == 0.0 {
                    0.0
                } else {
                    d / s
                }
            }
        }
    }

    #[inline]
    fn accumulate(self, acc: f64, weighted_term: f64) -> f64 {
        if self.is_additive() {
            acc + weighted_term
        } else {
            acc.max(weighted_term)
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Minkowski { alpha: Alpha::One } => "manhattan",
            DistanceKind::Minkowski { alpha: Alpha::Two } => "euclidean",
            DistanceKind::Chebyshev => "chebyshev",
            DistanceKind::Camberra => "camberra",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "manhattan" | "minkowski1" | "l1" => Ok(DistanceKind::MANHATTAN),
            "euclidean" | "minkowski2" | "l2" => Ok(DistanceKind::EUCLIDEAN),
            "chebyshev" | "chebyschev" | "linf" => Ok(DistanceKind::Chebyshev),
            "camberra" | "canberra" => Ok(DistanceKind::Camberra),
            other => Err(format!(
                "unknown distance `{other}` (manhattan, euclidean, chebyshev, camberra)"
            )),
        }
    }
}

/// A distance kind together with its per-feature scaling weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    pub weights: Vec<f64>,
}

impl DistanceSpec {
    pub fn new(kind: DistanceKind, weights: Vec<f64>) -> Result<Self> {
        let spec = DistanceSpec { kind, weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unit(kind: DistanceKind, n_features: usize) -> Self {
        DistanceSpec {
            kind,
            weights: vec![1.0; n_features],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidModel(format!(
                "weights must be finite and nonnegative, found {w}"
            )));
        }
        Ok(())
    }
}

#[inline]
fn weighted(kind: DistanceKind, weights: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&s, &a), &b) in weights.iter().zip(x).zip(y) {
        if s != 0.0 {
            acc = kind.accumulate(acc, s * kind.term(a, b));
        }
    }
    acc
}

/// Dissimilarity of `x` and `y` under `spec`.
pub fn dissimilarity(spec: &DistanceSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = spec.weights.len();
    for v in [x, y] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    spec.validate()?;
    Ok(weighted(spec.kind, &spec.weights, x, y))
}

/// Symmetric `n x n` matrix of dissimilarities, zero on the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    fn from_upper(n: usize, upper: &[f64]) -> Self {
        let mut data = vec![0.0; n * n];
        let mut idx = 0;
        for p in 0..n {
            for q in p + 1..n {
                data[p * n + q] = upper[idx];
                data[q * n + p] = upper[idx];
                idx += 1;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.data[p * self.n + q]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.n..(p + 1) * self.n]
    }
}

/// All pairwise dissimilarities of `data` under `spec`.
pub fn pairwise_matrix(spec: &DistanceSpec, data: &Dataset) -> Result<DistanceMatrix> {
    if spec.weights.len() != data.n_features() {
        return Err(Error::LengthMismatch {
            expected: data.n_features(),
            found: spec.weights.len(),
        });
    }
    spec.validate()?;
    let n = data.len();
    let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for p in 0..n {
        for q in p + 1..n {
            upper.push(weighted(spec.kind, &spec.weights, data.row(p), data.row(q)));
        }
    }
    Ok(DistanceMatrix::from_upper(n, &upper))
}

/// Unweighted per-feature terms of every pair, so that matrices for many
/// weight vectors can be formed without touching the raw vectors again.
///
/// `combine` performs the same floating-point operations in the same order
/// as [`dissimilarity`], so its matrices equal [`pairwise_matrix`] exactly.
#[derive(Clone, Debug)]
pub struct FeatureTerms {
    kind: DistanceKind,
    n: usize,
    n_features: usize,
    /// Feature-major packed upper triangles.
    terms: Vec<f64>,
}

impl FeatureTerms {
    pub fn new(kind: DistanceKind, data: &Dataset) -> Self {
        let n = data.len();
        let pairs = n * n.saturating_sub(1) / 2;
        let n_features = data.n_features();
        let mut terms = Vec::with_capacity(pairs * n_features);
        for i in 0..n_features {
            for p in 0..n {
                let a = data.row(p)[i];
                for q in p + 1..n {
                    terms.push(kind.term(a, data.row(q)[i]));
                }
            }
        }
        FeatureTerms {
            kind,
            n,
            n_features,
            terms,
        }
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn combine(&self, weights: &[f64]) -> Result<DistanceMatrix> {
        if weights.len() != self.n_features {
            return Err(Error::LengthMismatch {
                expected: self.n_features,
                found: weights.len(),
            });
        }
        let pairs = self.n * self.n.saturating_sub(1) / 2;
        let mut acc = vec![0.0; pairs];
        for (i, &s) in weights.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let t = &self.terms[i * pairs..(i + 1) * pairs];
            if self.kind.is_additive() {
                for (a, &t) in acc.iter_mut().zip(t) {
                    *a += s * t;
                }
            } else {
                for (a, &t) in acc.iter_mut().zip(t) {
                    *a = a.max(s * t);
                }
            }
        }
        Ok(DistanceMatrix::from_upper(self.n, &acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_csv, CsvOptions};

    fn spec(kind: DistanceKind, w: &[f64]) -> DistanceSpec {
        DistanceSpec::new(kind, w.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_squared_sum() {
        let s = spec(DistanceKind::EUCLIDEAN, &[1.0, 1.0]);
        assert_eq!(dissimilarity(&s, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn identity_is_zero() {
        let x = [0.0, -2.5, 3.0];
        for kind in DistanceKind::default_candidates() {
            let s = spec(kind, &[1.0, 0.3, 2.0]);
            assert_eq!(dissimilarity(&s, &x, &x).unwrap(), 0.0, "{kind}");
        }
    }

    #[test]
    fn camberra_values() {
        let s = spec(DistanceKind::Camberra, &[1.0]);
        assert_eq!(dissimilarity(&s, &[1.0], &[3.0]).unwrap(), 0.5);
        let s = spec(DistanceKind::Camberra, &[1.0, 1.0]);
        assert_eq!(dissimilarity(&s, &[0.0, 1.0], &[0.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn weighted_manhattan() {
        let s = spec(DistanceKind::MANHATTAN, &[0.5, 0.0]);
        assert_eq!(dissimilarity(&s, &[2.0, 7.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn chebyshev_weighted_max() {
        let s = spec(DistanceKind::Chebyshev, &[1.0, 0.1]);
        assert_eq!(dissimilarity(&s, &[0.0, 0.0], &[1.0, 5.0]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        let s = spec(DistanceKind::EUCLIDEAN, &[1.0, 1.0]);
        assert!(matches!(
            dissimilarity(&s, &[0.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            dissimilarity(&s, &[0.0, f64::NAN], &[1.0, 2.0]),
            Err(Error::NonFinite)
        ));
        assert!(DistanceSpec::new(DistanceKind::EUCLIDEAN, vec![-1.0]).is_err());
    }

    #[test]
    fn small_matrices() {
        let opts = CsvOptions::default();
        let one = parse_csv("1.5,A\n", &opts);
        // a lone row cannot carry two classes through the loader; build directly
        assert!(one.is_err());
        let d = crate::dataset::Dataset::new(
            vec![crate::dataset::FeatureSpec::continuous("x", 0)],
            vec![vec![1.5]],
            vec![0],
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        let m = pairwise_matrix(&spec(DistanceKind::MANHATTAN, &[1.0]), &d).unwrap();
        assert_eq!((m.len(), m.get(0, 0)), (1, 0.0));

        let d = parse_csv("0,A\n2,B\n", &opts).unwrap();
        let m = pairwise_matrix(&spec(DistanceKind::MANHATTAN, &[1.0]), &d).unwrap();
        assert_eq!(m.row(0), &[0.0, 2.0]);
        assert_eq!(m.row(1), &[2.0, 0.0]);
    }

    #[test]
    fn terms_match_direct_matrix() {
        let d = parse_csv(
            "0.1,3,-2,A\n0.7,1,0,B\n0,0,0,A\n2.5,-1,4,B\n",
            &CsvOptions::default(),
        )
        .unwrap();
        for kind in DistanceKind::default_candidates() {
            let terms = FeatureTerms::new(kind, &d);
            for w in [[1.0, 1.0, 1.0], [0.3, 0.0, 0.9], [0.0, 0.0, 0.0]] {
                let direct = pairwise_matrix(&spec(kind, &w), &d).unwrap();
                assert_eq!(terms.combine(&w).unwrap(), direct, "{kind} {w:?}");
            }
        }
    }

    #[test]
    fn parse_names() {
        for kind in DistanceKind::default_candidates() {
            assert_eq!(kind.to_string().parse::<DistanceKind>().unwrap(), kind);
        }
        assert_eq!("canberra".parse::<DistanceKind>().unwrap(), DistanceKind::Camberra);
        assert!("cosine".parse::<DistanceKind>().is_err());
    }

    #[test]
    fn serde_shape() {
        let json = serde_json::to_string(&DistanceKind::EUCLIDEAN).unwrap();
        assert_eq!(json, r#"{"kind":"minkowski","alpha":2}"#);
        assert!(serde_json::from_str::<DistanceKind>(r#"{"kind":"minkowski","alpha":3}"#).is_err());
    }
}
