//! Compressed sparse row matrices with a cached transpose.

use std::io::Write;

use rayon::prelude::*;

use crate::linalg::LinearOperator;

/// Row count above which products run on the rayon pool. Each output entry
/// is reduced sequentially, so results do not depend on the thread count.
const PARALLEL_ROWS: usize = 2048;

#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { row_ptr, cols, vals }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        let row_dot = |i: usize| self.row(i).map(|(c, v)| v * x[c]).sum::<f64>();
        if y.len() >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        }
    }
}

/// Square sparse matrix. Duplicate triplets are summed.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    rows: Csr,
    cols: Csr,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Self {
        let transposed = triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        Self {
            n,
            rows: Csr::from_triplets(n, triplets),
            cols: Csr::from_triplets(n, transposed),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.vals.len()
    }

    /// Nonzeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.row(i)
    }

    /// Nonzeros of column `j` as `(row, value)`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cols.row(j)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Writes `row col value` lines, one per nonzero, in row-major order.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> crate::linalg::Matrix {
        let mut m = crate::linalg::Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.rows.mul(x, y)
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.cols.mul(x, y)
    }
}
