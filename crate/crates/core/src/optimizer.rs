//! Interpolation-weight optimizers.
//!
//! * The LP surrogate maximizes the summed mixture probability
//!   `sum_i sum_j lambda_j p[i][j]` over the simplex. It is assembled either
//!   in full (one variable per token probability plus the weights, one
//!   equality row per token, one convexity row) or reduced to the weights
//!   alone with column sums as objective coefficients. Both forms have their
//!   optimum at a simplex vertex.
//! * The exact oracle maximizes `sum_i ln(sum_j lambda_j p[i][j])`, which is
//!   the log of the token-probability product and therefore minimizes
//!   perplexity. It is concave, so projected gradient ascent with a
//!   Frank-Wolfe gap certificate finds the global optimum.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{dot, perplexity, PerplexityValue, WeightVector};
use crate::ngram::ProbabilityMatrix;
use crate::numeric::{pairwise_sum, project_to_simplex};
use crate::simplex::{self, LinearProgram, Status};

/// Largest token count accepted by the full LP form (its tableau is dense
/// and quadratic in the token count).
pub const FULL_LP_MAX_ROWS: usize = 2500;

pub const DEFAULT_EXACT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_EXACT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpForm {
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMethod {
    LpFull,
    LpReduced,
    ExactConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub elapsed_ms: f64,
    /// Final Frank-Wolfe gap on the mean log-likelihood (exact oracle only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub method: OptimizerMethod,
    pub weights: WeightVector,
    /// `sum_i mixture_prob(i, weights)`.
    pub surrogate_objective: f64,
    pub true_perplexity: PerplexityValue,
    pub solver_stats: SolverStats,
}

fn require_rows(matrix: &ProbabilityMatrix) -> Result<()> {
    if matrix.is_empty() {
        Err(Error::usage("optimizer needs a non-empty probability matrix"))
    } else {
        Ok(())
    }
}

fn check_bounds(lower: &[f64], n: usize) -> Result<()> {
    if lower.len() != n {
        return Err(Error::usage(format!(
            "{} lower bounds for {n} weights",
            lower.len()
        )));
    }
    if lower.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::usage("lower bounds must be non-negative"));
    }
    if lower.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::usage("lower bounds sum above 1"));
    }
    Ok(())
}

/// Full surrogate LP over `(lambda_1..lambda_n, P_1..P_N)`:
/// rows `sum_j p[i][j] lambda_j - P_i = 0` then `sum_j lambda_j = 1`,
/// objective `sum_i P_i`.
pub fn build_model8_full(matrix: &ProbabilityMatrix) -> Result<LinearProgram> {
    build_model8_full_bounded(matrix, &vec![0.0; matrix.n_cols()])
}

/// As [`build_model8_full`] with `lambda_j >= lower[j]`, expressed through
/// the shifted variables `lambda_j - lower[j] >= 0`.
pub fn build_model8_full_bounded(matrix: &ProbabilityMatrix, lower: &[f64]) -> Result<LinearProgram> {
    require_rows(matrix)?;
    let (rows_n, n) = (matrix.n_rows(), matrix.n_cols());
    check_bounds(lower, n)?;
    let width = n + rows_n;
    let mut rows = Vec::with_capacity(rows_n + 1);
    let mut rhs = Vec::with_capacity(rows_n + 1);
    for (i, p) in matrix.rows().enumerate() {
        let mut row = vec![0.0; width];
        row[..n].copy_from_slice(p);
        row[n + i] = -1.0;
        rows.push(row);
        let shift = dot(p, lower);
        rhs.push(if shift == 0.0 { 0.0 } else { -shift });
    }
    let mut convexity = vec![0.0; width];
    convexity[..n].fill(1.0);
    rows.push(convexity);
    rhs.push(1.0 - lower.iter().sum::<f64>());
    let mut objective = vec![0.0; width];
    objective[n..].fill(1.0);
    LinearProgram::new(objective, rows, rhs)
}

/// Weights-only surrogate LP: `max sum_j s_j lambda_j` with `s_j` the column
/// sums, subject to `sum_j lambda_j = 1`.
pub fn build_model8_reduced(matrix: &ProbabilityMatrix) -> Result<LinearProgram> {
    build_model8_reduced_bounded(matrix, &vec![0.0; matrix.n_cols()])
}

pub fn build_model8_reduced_bounded(
    matrix: &ProbabilityMatrix,
    lower: &[f64],
) -> Result<LinearProgram> {
    require_rows(matrix)?;
    let n = matrix.n_cols();
    check_bounds(lower, n)?;
    LinearProgram::new(
        matrix.column_sums(),
        vec![vec![1.0; n]],
        vec![1.0 - lower.iter().sum::<f64>()],
    )
}

/// `sum_i mixture_prob(i, w)`, summed pairwise.
pub fn surrogate_objective(matrix: &ProbabilityMatrix, w: &WeightVector) -> f64 {
    let mix: Vec<f64> = matrix
        .rows()
        .map(|r| dot(r, w.as_slice()).min(1.0))
        .collect();
    pairwise_sum(&mix)
}

pub fn optimize_lp(matrix: &ProbabilityMatrix, form: LpForm) -> Result<OptimizationResult> {
    optimize_lp_bounded(matrix, form, &vec![0.0; matrix.n_cols()])
}

/// Solves the surrogate LP with optional per-weight lower bounds. Without
/// bounds the result is the vertex `e_j*` with `j* = argmax_j s_j` (lowest
/// index among ties).
pub fn optimize_lp_bounded(
    matrix: &ProbabilityMatrix,
    form: LpForm,
    lower: &[f64],
) -> Result<OptimizationResult> {
    let start = Instant::now();
    let n = matrix.n_cols();
    let lp = match form {
        LpForm::Full => {
            if matrix.n_rows() > FULL_LP_MAX_ROWS {
                return Err(Error::usage(format!(
                    "full LP form is limited to {FULL_LP_MAX_ROWS} tokens, got {}; use the reduced form",
                    matrix.n_rows()
                )));
            }
            build_model8_full_bounded(matrix, lower)?
        }
        LpForm::Reduced => build_model8_reduced_bounded(matrix, lower)?,
    };
    let solution = simplex::solve(&lp)?;
    if solution.status != Status::Optimal {
        return Err(Error::Solver(format!(
            "surrogate LP finished {:?}\n{lp}",
            solution.status
        )));
    }
    let raw: Vec<f64> = solution.x[..n]
        .iter()
        .zip(lower)
        .map(|(x, e)| x + e)
        .collect();
    let weights = WeightVector::cleaned(&raw)?;
    let true_perplexity = perplexity(matrix, &weights)?;
    Ok(OptimizationResult {
        method: match form {
            LpForm::Full => OptimizerMethod::LpFull,
            LpForm::Reduced => OptimizerMethod::LpReduced,
        },
        surrogate_objective: surrogate_objective(matrix, &weights),
        weights,
        true_perplexity,
        solver_stats: SolverStats {
            iterations: solution.iterations,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            duality_gap: None,
            converged: true,
        },
    })
}

/// `sum_i ln(sum_j lambda_j p[i][j])`; `-inf` when a mixture is zero.
pub fn log_likelihood(matrix: &ProbabilityMatrix, lambda: &[f64]) -> f64 {
    let mut logs = Vec::with_capacity(matrix.n_rows());
    for row in matrix.rows() {
        let m = dot(row, lambda);
        if !(m > 0.0) {
            return f64::NEG_INFINITY;
        }
        logs.push(m.ln());
    }
    pairwise_sum(&logs)
}

/// `d/d lambda_j sum_i ln(m_i) = sum_i p[i][j] / m_i`.
pub fn log_likelihood_gradient(matrix: &ProbabilityMatrix, lambda: &[f64]) -> Vec<f64> {
    let n = matrix.n_cols();
    let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(matrix.n_rows()); n];
    for row in matrix.rows() {
        let m = dot(row, lambda);
        for (t, p) in terms.iter_mut().zip(row) {
            t.push(p / m);
        }
    }
    terms.iter().map(|t| pairwise_sum(t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Stop once the Frank-Wolfe gap of the mean log-likelihood is below this.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            tol: DEFAULT_EXACT_TOLERANCE,
            max_iterations: DEFAULT_EXACT_MAX_ITERATIONS,
        }
    }
}

pub fn optimize_exact(matrix: &ProbabilityMatrix, tol: f64) -> Result<OptimizationResult> {
    optimize_exact_with(
        matrix,
        ExactOptions {
            tol,
            ..ExactOptions::default()
        },
    )
}

/// Projected gradient ascent on the mean log-likelihood from the uniform
/// weights, with Barzilai-Borwein step proposals and backtracking.
pub fn optimize_exact_with(
    matrix: &ProbabilityMatrix,
    opts: ExactOptions,
) -> Result<OptimizationResult> {
    require_rows(matrix)?;
    if !(opts.tol > 0.0) {
        return Err(Error::usage("exact oracle tolerance must be positive"));
    }
    let start = Instant::now();
    let n = matrix.n_cols();
    if let Some(i) = matrix.rows().position(|r| r.iter().all(|&p| p <= 0.0)) {
        return Err(Error::WeakModel(format!(
            "token row {i} is zero in every column; no weights give finite perplexity"
        )));
    }
    let scale = 1.0 / matrix.n_rows() as f64;
    let objective = |l: &[f64]| log_likelihood(matrix, l) * scale;
    let gradient = |l: &[f64]| -> Vec<f64> {
        log_likelihood_gradient(matrix, l)
            .into_iter()
            .map(|g| g * scale)
            .collect()
    };
    let fw_gap = |l: &[f64], g: &[f64]| {
        let best = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        best - dot(g, l)
    };

    let mut lambda = WeightVector::uniform(n).as_slice().to_vec();
    let mut value = objective(&lambda);
    let mut grad = gradient(&lambda);
    let mut gap = fw_gap(&lambda, &grad);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = gap <= opts.tol;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let mut t = step;
        let (next, next_value) = loop {
            let ascent: Vec<f64> = lambda.iter().zip(&grad).map(|(l, g)| l + t * g).collect();
            let candidate = project_to_simplex(&ascent);
            let candidate_value = objective(&candidate);
            let diff: Vec<f64> = candidate.iter().zip(&lambda).map(|(a, b)| a - b).collect();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            let model = value + dot(&grad, &diff) - sq / (2.0 * t);
            if candidate_value >= model || sq == 0.0 || t < 1e-300 {
                break (candidate, candidate_value);
            }
            t *= 0.5;
        };
        if next == lambda {
            // No representable progress left.
            break;
        }
        let next_grad = gradient(&next);
        let s: Vec<f64> = next.iter().zip(&lambda).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy < 0.0 {
            (dot(&s, &s) / -sy).clamp(1e-12, 1e12)
        } else {
            (t * 2.0).min(1e12)
        };
        lambda = next;
        value = next_value;
        grad = next_grad;
        gap = fw_gap(&lambda, &grad);
        converged = gap <= opts.tol;
    }

    let weights = WeightVector::cleaned(&lambda)?;
    let true_perplexity = perplexity(matrix, &weights)?;
    Ok(OptimizationResult {
        method: OptimizerMethod::ExactConvex,
        surrogate_objective: surrogate_objective(matrix, &weights),
        weights,
        true_perplexity,
        solver_stats: SolverStats {
            iterations,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            duality_gap: Some(gap),
            converged,
        },
    })
}

/// One sample of `f(x) = prod x_i` against `g(x) = sum x_i` on the unit box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: f64,
}

/// Samples `[0, 1]^n` on a lattice of spacing `grid_step`, `x_1` varying
/// slowest.
pub fn approximation_surface(n: usize, grid_step: f64) -> Result<Vec<SurfacePoint>> {
    if !(2..=3).contains(&n) {
        return Err(Error::usage(format!("surface dimension must be 2 or 3, got {n}")));
    }
    let divisions = crate::grid::GridConfig::new(grid_step, n)?.divisions() as usize;
    let per_axis = divisions + 1;
    let total = per_axis.pow(n as u32);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; n];
        for xi in x.iter_mut().rev() {
            *xi = (rem % per_axis) as f64 / divisions as f64;
            rem /= per_axis;
        }
        let f = x.iter().product();
        let g = x.iter().sum();
        points.push(SurfacePoint { x, f, g });
    }
    Ok(points)
}

/// CSV `x1,...,xn,f,g`.
pub fn write_surface_csv<W: Write>(points: &[SurfacePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = points.first().map_or(0, |p| p.x.len());
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(["f".to_string(), "g".to_string()]);
    w.write_record(&header)?;
    for p in points {
        let mut rec: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
        rec.push(p.f.to_string());
        rec.push(p.g.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<surface>", e))?;
    Ok(())
}
