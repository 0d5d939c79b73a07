use std::io::Write;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Component probabilities `p[i][j] = P_{(j+1)-gram}(w_i | context)` for every
/// scored token position of an evaluation text. Column `j` (zero based) holds
/// the order `j + 1` estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// `(sentence index, token index)` of each row in the source text.
    positions: Vec<(usize, usize)>,
}

impl ProbabilityMatrix {
    /// Row-major constructor. Every entry must lie in `[0, 1]`.
    pub fn new(cols: usize, data: Vec<f64>, positions: Vec<(usize, usize)>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::usage("probability matrix needs at least one column"));
        }
        if !data.len().is_multiple_of(cols) {
            return Err(Error::usage(format!(
                "{} entries do not fill rows of width {cols}",
                data.len()
            )));
        }
        let rows = data.len() / cols;
        if positions.len() != rows {
            return Err(Error::usage(format!(
                "{} positions for {rows} rows",
                positions.len()
            )));
        }
        if let Some((k, p)) = data
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::usage(format!(
                "entry ({}, {}) = {p} is not a probability",
                k / cols,
                k % cols
            )));
        }
        Ok(ProbabilityMatrix {
            rows,
            cols,
            data,
            positions,
        })
    }

    /// Builds from explicit rows; positions are `(0, row index)`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::usage("ragged probability rows"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        let positions = (0..rows.len()).map(|i| (0, i)).collect();
        if rows.is_empty() {
            return Err(Error::usage("cannot infer width of an empty matrix"));
        }
        Self::new(cols, data, positions)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    /// `s_j = sum_i p[i][j]`, summed pairwise.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut column = Vec::with_capacity(self.rows);
        (0..self.cols)
            .map(|j| {
                column.clear();
                column.extend(self.rows().map(|r| r[j]));
                pairwise_sum(&column)
            })
            .collect()
    }

    /// CSV `position,p1,...,pn`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["position".to_string()];
        header.extend((1..=self.cols).map(|j| format!("p{j}")));
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut record = vec![i.to_string()];
            record.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<probability matrix>", e))?;
        Ok(())
    }
}
