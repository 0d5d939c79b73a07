//! Interpolated mixture probabilities and perplexity.
//!
//! Weight index `j` is the n-gram order minus one: `weights[0]` scales the
//! unigram column, `weights[n - 1]` the highest order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngram::ProbabilityMatrix;
use crate::numeric::pairwise_sum;

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Interpolation weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Rejects (never rescales) vectors off the simplex.
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::usage("weight vector is empty"));
        }
        if let Some(bad) = lambda.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::usage(format!("weight {bad} is not a non-negative real")));
        }
        let total: f64 = lambda.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::usage(format!(
                "weights sum to {total}, not 1 (tolerance {SIMPLEX_TOLERANCE})"
            )));
        }
        Ok(WeightVector(lambda))
    }

    /// The vertex `e_j` of the `n`-simplex.
    pub fn vertex(n: usize, j: usize) -> Self {
        assert!(j < n, "vertex {j} of a {n}-simplex");
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        WeightVector(v)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        WeightVector(vec![1.0 / n as f64; n])
    }

    /// Zeroes components within `SIMPLEX_TOLERANCE` of 0 (including tiny
    /// negatives left by a solver) and divides by the remaining sum.
    pub fn cleaned(raw: &[f64]) -> Result<Self> {
        let snapped: Vec<f64> = raw
            .iter()
            .map(|&x| if x.abs() <= SIMPLEX_TOLERANCE { 0.0 } else { x })
            .collect();
        let total: f64 = snapped.iter().sum();
        if !(total > 0.0) {
            return Err(Error::usage(format!("cannot normalize weights {raw:?}")));
        }
        Self::new(snapped.iter().map(|x| x / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the single unit component, if this is a simplex vertex.
    pub fn vertex_index(&self) -> Option<usize> {
        let ones: Vec<usize> = (0..self.0.len())
            .filter(|&j| (self.0[j] - 1.0).abs() <= SIMPLEX_TOLERANCE)
            .collect();
        let rest_zero = self
            .0
            .iter()
            .enumerate()
            .all(|(j, x)| ones.contains(&j) || x.abs() <= SIMPLEX_TOLERANCE);
        (ones.len() == 1 && rest_zero).then(|| ones[0])
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        WeightVector::new(raw).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| format!("{x:.6}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Perplexity over `n_tokens` scored positions. Infinite when some token
/// gets zero mixture probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityValue {
    pub value: f64,
    pub log2_per_token: f64,
    pub n_tokens: usize,
}

impl PerplexityValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    fn infinite(n_tokens: usize) -> Self {
        PerplexityValue {
            value: f64::INFINITY,
            log2_per_token: f64::INFINITY,
            n_tokens,
        }
    }
}

impl fmt::Display for PerplexityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{:.6}", self.value)
        } else {
            f.write_str("inf")
        }
    }
}

/// JSON has no infinity, so non-finite values are written as the string "inf".
pub(crate) mod f64_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad number {t:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PerplexityRepr {
    #[serde(with = "f64_or_inf")]
    value: f64,
    #[serde(with = "f64_or_inf")]
    log2_per_token: f64,
    n_tokens: usize,
}

impl Serialize for PerplexityValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PerplexityRepr {
            value: self.value,
            log2_per_token: self.log2_per_token,
            n_tokens: self.n_tokens,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PerplexityValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PerplexityRepr::deserialize(d)?;
        Ok(PerplexityValue {
            value: r.value,
            log2_per_token: r.log2_per_token,
            n_tokens: r.n_tokens,
        })
    }
}

/// `sum_j lambda_j p_j`, clamped to at most 1.
pub fn mixture_prob(row: &[f64], w: &WeightVector) -> Result<f64> {
    if row.len() != w.len() {
        return Err(Error::usage(format!(
            "row has {} columns but {} weights were given",
            row.len(),
            w.len()
        )));
    }
    Ok(dot(row, w.as_slice()).min(1.0))
}

#[inline]
pub(crate) fn dot(row: &[f64], lambda: &[f64]) -> f64 {
    row.iter().zip(lambda).map(|(p, l)| p * l).sum()
}

/// `exp(-(1/N) sum_i ln P_i)` computed in log space; `+inf` as soon as any
/// mixture probability is zero.
pub fn perplexity(matrix: &ProbabilityMatrix, w: &WeightVector) -> Result<PerplexityValue> {
    if matrix.is_empty() {
        return Err(Error::usage("perplexity of an empty matrix"));
    }
    if matrix.n_cols() != w.len() {
        return Err(Error::usage(format!(
            "matrix has {} columns but {} weights were given",
            matrix.n_cols(),
            w.len()
        )));
    }
    Ok(perplexity_unchecked(matrix, w.as_slice()))
}

pub(crate) fn perplexity_unchecked(matrix: &ProbabilityMatrix, lambda: &[f64]) -> PerplexityValue {
    let n = matrix.n_rows();
    let mut logs = Vec::with_capacity(n);
    for row in matrix.rows() {
        let p = dot(row, lambda).min(1.0);
        if !(p > 0.0) {
            return PerplexityValue::infinite(n);
        }
        logs.push(p.ln());
    }
    let mean_ln = pairwise_sum(&logs) / n as f64;
    let log2_per_token = -mean_ln / std::f64::consts::LN_2;
    PerplexityValue {
        value: log2_per_token.exp2(),
        log2_per_token,
        n_tokens: n,
    }
}

/// Maps the nested trigram form `lambda P3 + (1 - lambda)(mu P2 + (1 - mu) P1)`
/// to unigram/bigram/trigram weights.
pub fn two_param_weights(lambda: f64, mu: f64) -> Result<WeightVector> {
    for (name, v) in [("lambda", lambda), ("mu", mu)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::usage(format!("{name} = {v} outside [0, 1]")));
        }
    }
    WeightVector::new(vec![(1.0 - lambda) * (1.0 - mu), (1.0 - lambda) * mu, lambda])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mixture_examples() {
        let row = [0.1, 0.2, 0.4];
        assert_eq!(mixture_prob(&row, &w(&[1.0, 0.0, 0.0])).unwrap(), 0.1);
        let third = 1.0 / 3.0;
        assert_relative_eq!(
            mixture_prob(&row, &w(&[third, third, third])).unwrap(),
            0.7 / 3.0,
            max_relative = 1e-12
        );
        assert_eq!(mixture_prob(&[0.0; 3], &w(&[0.2, 0.3, 0.5])).unwrap(), 0.0);
        assert!(matches!(
            mixture_prob(&row, &w(&[0.5, 0.5])),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn perplexity_examples() {
        let one = w(&[1.0]);
        let m = ProbabilityMatrix::from_rows(&[[0.5]]).unwrap();
        assert_eq!(perplexity(&m, &one).unwrap().value, 2.0);
        let m = ProbabilityMatrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        assert_eq!(perplexity(&m, &one).unwrap().value, 1.0);
        let m = ProbabilityMatrix::from_rows(&[[0.5], [0.4], [0.6]]).unwrap();
        let direct = (1.0f64 / (0.5 * 0.4 * 0.6)).powf(1.0 / 3.0);
        assert_relative_eq!(perplexity(&m, &one).unwrap().value, direct, max_relative = 1e-12);
    }

    #[test]
    fn zero_probability_is_infinite() {
        let m = ProbabilityMatrix::from_rows(&[[0.5, 0.5], [0.3, 0.0]]).unwrap();
        let p = perplexity(&m, &w(&[0.0, 1.0])).unwrap();
        assert!(p.value.is_infinite() && p.log2_per_token.is_infinite());
        assert_eq!(p.n_tokens, 2);
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = ProbabilityMatrix::new(2, vec![], vec![]).unwrap();
        assert!(matches!(perplexity(&m, &w(&[0.5, 0.5])), Err(Error::Usage(_))));
    }

    #[test]
    fn two_param_examples() {
        assert_eq!(two_param_weights(0.0, 1.0).unwrap(), w(&[0.0, 1.0, 0.0]));
        assert_eq!(two_param_weights(1.0, 0.3).unwrap(), w(&[0.0, 0.0, 1.0]));
        assert_eq!(two_param_weights(0.5, 0.5).unwrap(), w(&[0.25, 0.25, 0.5]));
        assert!(two_param_weights(1.5, 0.0).is_err());
        assert!(two_param_weights(0.5, -0.1).is_err());
    }

    #[test]
    fn weak_model_trigger() {
        // Unseen bigram: lambda = 0, mu = 1 puts all weight on the zero column.
        let m = ProbabilityMatrix::from_rows(&[[0.01, 0.0, 0.0]]).unwrap();
        let p = perplexity(&m, &two_param_weights(0.0, 1.0).unwrap()).unwrap();
        assert!(!p.is_finite());
    }

    #[test]
    fn weight_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.2, -0.2]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.5 + 1e-10]).is_ok());
        let c = WeightVector::cleaned(&[1e-12, 0.999_999_999_5, -1e-11]).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(c.vertex_index(), Some(1));
        assert_eq!(w(&[0.5, 0.5]).vertex_index(), None);
    }

    #[test]
    fn serializes_infinity_as_text() {
        let p = PerplexityValue::infinite(3);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"value":"inf","log2_per_token":"inf","n_tokens":3}"#);
        let back: PerplexityValue = serde_json::from_str(&json).unwrap();
        assert!(back.value.is_infinite());
    }
}
