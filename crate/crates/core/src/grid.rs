//! Baseline weight searches: exhaustive simplex lattice and uniform random
//! sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{perplexity_unchecked, PerplexityValue, WeightVector};
use crate::ngram::ProbabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    step: f64,
    n: usize,
    divisions: u32,
}

impl GridConfig {
    pub fn new(step: f64, n: usize) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::usage(format!("grid step {step} outside (0, 1]")));
        }
        if n == 0 {
            return Err(Error::usage("grid needs at least one weight"));
        }
        let inverse = 1.0 / step;
        let divisions = inverse.round();
        if (inverse - divisions).abs() > 1e-9 {
            return Err(Error::usage(format!(
                "grid step {step} does not divide 1 evenly"
            )));
        }
        Ok(GridConfig {
            step,
            n,
            divisions: divisions as u32,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `1 / step`.
    pub fn divisions(&self) -> u32 {
        self.divisions
    }

    /// Number of lattice points, `C(m + n - 1, n - 1)` with `m = 1 / step`.
    pub fn lattice_size(&self) -> u64 {
        let m = self.divisions as u64;
        let r = (self.n - 1) as u64;
        (1..=r).fold(1u64, |acc, i| acc * (m + i) / i)
    }

    pub fn lattice(&self) -> SimplexLattice {
        SimplexLattice::new(self.divisions, self.n)
    }
}

/// Integer compositions `(k_1, ..., k_n)` with `sum k = m`, enumerated with
/// `k_1` in the outermost loop and each loop ascending.
#[derive(Debug, Clone)]
pub struct SimplexLattice {
    m: u32,
    current: Option<Vec<u32>>,
}

impl SimplexLattice {
    fn new(m: u32, n: usize) -> Self {
        let mut first = vec![0; n];
        first[n - 1] = m;
        SimplexLattice {
            m,
            current: Some(first),
        }
    }
}

impl Iterator for SimplexLattice {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.take()?;
        let n = out.len();
        let mut next = out.clone();
        let mut advanced = false;
        for i in (0..n.saturating_sub(1)).rev() {
            let prefix: u32 = next[..=i].iter().sum();
            if prefix < self.m {
                next[i] += 1;
                for k in next.iter_mut().take(n - 1).skip(i + 1) {
                    *k = 0;
                }
                let used: u32 = next[..n - 1].iter().sum();
                next[n - 1] = self.m - used;
                advanced = true;
                break;
            }
        }
        if advanced {
            self.current = Some(next);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub weights: WeightVector,
    pub perplexity: PerplexityValue,
    pub points_evaluated: u64,
}

fn check_matrix(matrix: &ProbabilityMatrix, n: usize) -> Result<()> {
    if matrix.is_empty() {
        return Err(Error::usage("search over an empty probability matrix"));
    }
    if matrix.n_cols() != n {
        return Err(Error::usage(format!(
            "matrix has {} columns, search configured for {n}",
            matrix.n_cols()
        )));
    }
    Ok(())
}

/// Tracks the first strictly best candidate.
struct Best {
    lambda: Vec<f64>,
    perplexity: PerplexityValue,
    evaluated: u64,
}

impl Best {
    fn new() -> Self {
        Best {
            lambda: Vec::new(),
            perplexity: PerplexityValue {
                value: f64::INFINITY,
                log2_per_token: f64::INFINITY,
                n_tokens: 0,
            },
            evaluated: 0,
        }
    }

    fn offer(&mut self, matrix: &ProbabilityMatrix, lambda: Vec<f64>) {
        let p = perplexity_unchecked(matrix, &lambda);
        self.evaluated += 1;
        if self.lambda.is_empty() || p.value < self.perplexity.value {
            self.lambda = lambda;
            self.perplexity = p;
        }
    }

    fn finish(self, n: usize) -> Result<SearchResult> {
        // All points infinite: report the all-unigram vertex.
        let weights = if self.perplexity.is_finite() {
            WeightVector::new(self.lambda)?
        } else {
            WeightVector::vertex(n, 0)
        };
        Ok(SearchResult {
            weights,
            perplexity: self.perplexity,
            points_evaluated: self.evaluated,
        })
    }
}

/// Exhaustive search over the step-`s` simplex lattice. Ties go to the first
/// point in loop order.
pub fn grid_search(matrix: &ProbabilityMatrix, cfg: &GridConfig) -> Result<SearchResult> {
    check_matrix(matrix, cfg.n)?;
    let m = cfg.divisions as f64;
    let mut best = Best::new();
    for k in cfg.lattice() {
        best.offer(matrix, k.iter().map(|&k| k as f64 / m).collect());
    }
    best.finish(cfg.n)
}

/// Draws one point uniformly from the simplex (normalized unit exponentials).
fn sample_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Evaluates the `n` vertices, then `samples` uniform simplex draws.
pub fn random_search(matrix: &ProbabilityMatrix, samples: usize, seed: u64) -> Result<SearchResult> {
    if samples == 0 {
        return Err(Error::usage("random search needs at least one sample"));
    }
    let n = matrix.n_cols();
    check_matrix(matrix, n)?;
    let mut best = Best::new();
    for j in 0..n {
        best.offer(matrix, WeightVector::vertex(n, j).as_slice().to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let lambda = sample_simplex(&mut rng, n);
        best.offer(matrix, lambda);
    }
    best.finish(n)
}
