//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use interp_lp::ngram::ProbabilityMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random matrix with entries in [0, 1]; roughly `zero_rate` of the entries
/// outside the first column are exactly zero.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, zero_rate: f64) -> ProbabilityMatrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|j| {
                    if j > 0 && rng.random::<f64>() < zero_rate {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    ProbabilityMatrix::from_rows(&data).unwrap()
}

/// Like `random_matrix` but with the first column bounded away from zero.
pub fn positive_first_column(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ProbabilityMatrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|j| {
                    if j == 0 {
                        0.01 + 0.2 * rng.random::<f64>()
                    } else if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    ProbabilityMatrix::from_rows(&data).unwrap()
}

/// Perplexity as the N-th root of the inverse product, computed directly.
pub fn direct_perplexity(matrix: &ProbabilityMatrix, w: &[f64]) -> f64 {
    let mut product = 1.0;
    for row in matrix.rows() {
        let p: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        product *= p;
    }
    if product <= 0.0 {
        return f64::INFINITY;
    }
    product.powf(-1.0 / matrix.n_rows() as f64)
}

/// Naive grid: for n = 3, nested loops over the unigram then bigram weight.
pub fn naive_grid_3(matrix: &ProbabilityMatrix, divisions: usize) -> (Vec<f64>, f64, usize) {
    let mut best = (vec![1.0, 0.0, 0.0], f64::INFINITY);
    let mut count = 0;
    for a in 0..=divisions {
        for b in 0..=(divisions - a) {
            let c = divisions - a - b;
            let w = [a, b, c].map(|x| x as f64 / divisions as f64);
            count += 1;
            let ppl = direct_log_perplexity(matrix, &w);
            if ppl < best.1 {
                best = (w.to_vec(), ppl);
            }
        }
    }
    (best.0, best.1, count)
}

/// Log-space perplexity with plain summation.
pub fn direct_log_perplexity(matrix: &ProbabilityMatrix, w: &[f64]) -> f64 {
    let mut total = 0.0;
    for row in matrix.rows() {
        let p: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        if p <= 0.0 {
            return f64::INFINITY;
        }
        total += p.log2();
    }
    (-total / matrix.n_rows() as f64).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Brute {
    Optimal(f64),
    Infeasible,
}

/// Optimum of `max c.x, Ax = b, x >= 0` by enumerating every basis. Only
/// valid for bounded feasible regions and full-row-rank `A`.
pub fn brute_force_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Brute {
    let m = a.len();
    let n = c.len();
    let mut best: Option<f64> = None;
    for subset in combinations(n, m) {
        let basis = DMatrix::from_fn(m, m, |i, k| a[i][subset[k]]);
        let Some(inv) = basis.clone().try_inverse() else {
            continue;
        };
        if basis.determinant().abs() < 1e-10 {
            continue;
        }
        let xb = inv * DVector::from_column_slice(b);
        if xb.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let value: f64 = subset.iter().zip(xb.iter()).map(|(&j, v)| c[j] * v).sum();
        best = Some(best.map_or(value, |b: f64| b.max(value)));
    }
    best.map_or(Brute::Infeasible, Brute::Optimal)
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Random bounded LP: the first row has strictly positive coefficients.
/// Half the instances take `b = A x0` for a non-negative `x0` (feasible),
/// the rest draw `b` freely and may be infeasible.
pub fn random_bounded_lp(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(2..=8);
    let m = rng.random_range(1..=n.min(5));
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    for v in &mut a[0] {
        *v = rng.random_range(0.5..3.0);
    }
    let b = if rng.random::<bool>() {
        let x0: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.4 { 0.0 } else { rng.random_range(0.0..2.0) })
            .collect();
        a.iter()
            .map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum())
            .collect()
    } else {
        let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-4.0..4.0)).collect();
        b[0] = b[0].abs() + 0.1;
        b
    };
    (c, a, b)
}

pub fn full_row_rank(a: &[Vec<f64>]) -> bool {
    let m = a.len();
    let n = a[0].len();
    let mat = DMatrix::from_fn(m, n, |i, j| a[i][j]);
    mat.svd(false, false).rank(1e-8) == m
}
