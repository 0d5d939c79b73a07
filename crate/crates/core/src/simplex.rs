//! Dense two-phase tableau simplex for `max c·x  s.t.  A x = b, x >= 0`.
//!
//! Bland's rule picks both the entering variable (lowest index with positive
//! reduced cost) and the leaving variable (lowest basic index among tied
//! ratios), so the solver cannot cycle and is fully deterministic.
//!
//! Rows containing a column that appears in no other row start with that
//! column basic (after scaling the row); only the remaining rows receive
//! artificial variables for phase one.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest magnitude accepted as a pivot element.
pub const PIVOT_TOLERANCE: f64 = 1e-9;
/// Allowed constraint violation of a returned solution.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;
/// Reduced costs above this value still admit an improving column.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

const RATIO_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        if objective.is_empty() {
            return Err(Error::usage("linear program without variables"));
        }
        if rows.is_empty() {
            return Err(Error::usage("linear program without constraints"));
        }
        if rows.len() != rhs.len() {
            return Err(Error::usage(format!(
                "{} constraint rows but {} right-hand sides",
                rows.len(),
                rhs.len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != objective.len()) {
            return Err(Error::usage(format!(
                "constraint row {i} has {} coefficients, expected {}",
                rows[i].len(),
                objective.len()
            )));
        }
        let finite = objective
            .iter()
            .chain(rows.iter().flatten())
            .chain(&rhs)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::usage("linear program data must be finite"));
        }
        Ok(LinearProgram {
            objective,
            rows,
            rhs,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Largest `|A x - b|` over the constraints.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Fixed-precision dump: objective row first, then one line per constraint.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "max  ")?;
        for c in &self.objective {
            write!(f, " {c:>12.6}")?;
        }
        writeln!(f)?;
        for (row, b) in self.rows.iter().zip(&self.rhs) {
            write!(f, "st   ")?;
            for a in row {
                write!(f, " {a:>12.6}")?;
            }
            writeln!(f, "  = {b:>12.6}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSolution {
    pub status: Status,
    /// Primal values; the last feasible point visited unless `Optimal`.
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Basic variables in row order (rows found redundant are dropped).
    pub basis: Vec<usize>,
    pub iterations: usize,
    /// Final reduced costs `c_j - c_B B^-1 A_j` (zero for basic variables).
    pub reduced_costs: Vec<f64>,
}

struct Tableau {
    /// Rows of `[B^-1 A | B^-1 b]`.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Reduced costs, with the current objective value in the last slot.
    d: Vec<f64>,
    width: usize,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        self.t[r][c] = 1.0;
        let pivot_row = std::mem::take(&mut self.t[r]);
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pr;
                }
                row[c] = 0.0;
                let rhs = &mut row[self.width];
                if *rhs < 0.0 && *rhs > -FEASIBILITY_TOLERANCE {
                    *rhs = 0.0;
                }
            }
        }
        let factor = self.d[c];
        if factor != 0.0 {
            for (v, pr) in self.d.iter_mut().zip(&pivot_row) {
                *v -= factor * pr;
            }
            self.d[c] = 0.0;
        }
        self.t[r] = pivot_row;
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Recomputes reduced costs for objective `cost` from the current basis.
    fn price(&mut self, cost: &[f64]) {
        let mut d: Vec<f64> = cost.to_vec();
        d.push(0.0);
        for (row, &b) in self.t.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.d = d;
    }

    /// Bland's-rule primal simplex over columns `0..eligible`.
    fn run(&mut self, eligible: usize) -> Result<Outcome> {
        loop {
            let Some(enter) = (0..eligible).find(|&j| self.d[j] > OPTIMALITY_TOLERANCE) else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][enter];
                if a <= PIVOT_TOLERANCE {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((l, best)) => {
                        if ratio < best - RATIO_TIE
                            || (ratio <= best + RATIO_TIE && self.basis[i] < self.basis[l])
                        {
                            Some((i, ratio))
                        } else {
                            Some((l, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if self.iterations >= self.max_iterations {
                return Err(Error::Solver(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            self.pivot(r, enter);
        }
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs(i);
            }
        }
        x
    }
}

/// Finds, for each row, the lowest-index column that is nonzero in that row
/// only and whose scaled right-hand side is non-negative.
fn crash_columns(lp: &LinearProgram) -> Vec<Option<usize>> {
    let m = lp.rows.len();
    let mut result = vec![None; m];
    for j in 0..lp.n_vars() {
        let mut nonzero = (0..m).filter(|&i| lp.rows[i][j] != 0.0);
        let (Some(i), None) = (nonzero.next(), nonzero.next()) else {
            continue;
        };
        let a = lp.rows[i][j];
        if result[i].is_none() && a.abs() > PIVOT_TOLERANCE && lp.rhs[i] / a >= 0.0 {
            result[i] = Some(j);
        }
    }
    result
}

pub fn solve(lp: &LinearProgram) -> Result<SimplexSolution> {
    let n = lp.n_vars();
    let m = lp.n_constraints();
    let crash = crash_columns(lp);
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| crash[i].is_none()).collect();
    let width = n + artificial_rows.len();

    let mut t = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(&lp.rows[i]);
        row[width] = lp.rhs[i];
        let scale = match crash[i] {
            Some(j) => 1.0 / lp.rows[i][j],
            None if lp.rhs[i] < 0.0 => -1.0,
            None => 1.0,
        };
        if scale != 1.0 {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        match crash[i] {
            Some(j) => {
                row[j] = 1.0;
                basis.push(j);
            }
            None => {
                let a = n + artificial_rows.binary_search(&i).unwrap();
                row[a] = 1.0;
                basis.push(a);
            }
        }
        t.push(row);
    }

    let mut tab = Tableau {
        t,
        basis,
        d: Vec::new(),
        width,
        iterations: 0,
        max_iterations: 10_000 + 200 * (m + width),
    };

    let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
    if !artificial_rows.is_empty() {
        let mut phase_one = vec![0.0; width];
        for v in phase_one.iter_mut().skip(n) {
            *v = -1.0;
        }
        tab.price(&phase_one);
        tab.run(width)?;
        let infeasibility: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b >= n)
            .map(|(i, _)| tab.rhs(i).abs())
            .sum();
        if infeasibility > FEASIBILITY_TOLERANCE * scale {
            let x = vec![0.0; n];
            return Ok(SimplexSolution {
                status: Status::Infeasible,
                objective_value: 0.0,
                basis: tab.basis.iter().copied().filter(|&b| b < n).collect(),
                iterations: tab.iterations,
                reduced_costs: vec![0.0; n],
                x,
            });
        }
        // Pivot remaining (zero-valued) artificials out; rows where that is
        // impossible are linearly dependent and get dropped.
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= n {
                let col = (0..n).find(|&j| tab.t[r][j].abs() > PIVOT_TOLERANCE);
                match col {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.t.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = lp.objective.clone();
    cost.resize(width, 0.0);
    tab.price(&cost);
    let outcome = tab.run(n)?;

    let x = tab.primal(n);
    let residual = lp.max_residual(&x);
    if residual > FEASIBILITY_TOLERANCE * scale || x.iter().any(|&v| v < -FEASIBILITY_TOLERANCE) {
        return Err(Error::Solver(format!(
            "numerically singular basis: residual {residual:.3e} after {} pivots, basis {:?}",
            tab.iterations, tab.basis
        )));
    }
    let objective_value = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(SimplexSolution {
        status: match outcome {
            Outcome::Optimal => Status::Optimal,
            Outcome::Unbounded => Status::Unbounded,
        },
        x,
        objective_value,
        basis: tab.basis.clone(),
        iterations: tab.iterations,
        reduced_costs: tab.d[..n].to_vec(),
    })
}
