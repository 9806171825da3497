//! Compressed-sparse-row kernels, threshold ILU, triangular solves and the
//! small dense oracles used to check them.
//!
//! Every kernel here is a pure function of its inputs. Row sums run in
//! ascending column order so repeated calls are bit-identical.

mod dense;
mod ilu;
mod mmio;

pub use dense::{dense_lu_solve, dense_spectral_norm, DenseLu, DenseMatrix, DENSE_SIZE_LIMIT};
pub use ilu::{ilu_factorize, IluFactors, TriPart};
pub use mmio::{read_matrix_market, read_vector, write_matrix_market, write_vector};

use thiserror::Error;

/// Errors raised by the sparse and dense kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("drop tolerance must be finite and non-negative, got {0}")]
    InvalidDropTolerance(f64),
    #[error("ILU factorization failed at row {row}: pivot {pivot:e} is zero to working precision")]
    ZeroPivot { row: usize, pivot: f64 },
    #[error("triangular solve failed at row {row}: zero diagonal")]
    ZeroDiagonal { row: usize },
    #[error("matrix is singular to working precision (column {col})")]
    Singular { col: usize },
    #[error("dense oracle is limited to n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },
    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate:e})")]
    NoConvergence { iterations: usize, estimate: f64 },
    #[error("matrix market: {0}")]
    MatrixMarket(String),
}

/// A real matrix in compressed-sparse-row layout.
///
/// Column indices are strictly increasing within each row and every stored
/// value is finite. Construct through [`CsrMatrix::new`] or
/// [`CsrMatrix::from_triplets`] to have those invariants checked.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating the structure.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        let m = Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Assembles a matrix from `(row, col, value)` triplets. Duplicate
    /// entries are summed in the order they appear.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(SparseError::InvalidStructure(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            // stable sort keeps the summation order of duplicates fixed
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Converts a dense row-major matrix, skipping exact zeros.
    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..a.n_rows() {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Checks every structural invariant of the CSR layout.
    pub fn validate(&self) -> Result<(), SparseError> {
        let bad = |msg: String| Err(SparseError::InvalidStructure(msg));
        if self.row_ptr.len() != self.n_rows + 1 {
            return bad(format!(
                "row_ptr has length {}, expected {}",
                self.row_ptr.len(),
                self.n_rows + 1
            ));
        }
        if self.row_ptr[0] != 0 {
            return bad("row_ptr[0] must be 0".into());
        }
        if self.col_idx.len() != self.values.len() {
            return bad("col_idx and values differ in length".into());
        }
        if self.row_ptr[self.n_rows] != self.values.len() {
            return bad("row_ptr[n_rows] must equal the number of stored values".into());
        }
        for i in 0..self.n_rows {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if lo > hi {
                return bad(format!("row_ptr decreases at row {i}"));
            }
            let cols = &self.col_idx[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= self.n_cols {
                    return bad(format!("column {c} out of range in row {i}"));
                }
                if k > 0 && cols[k - 1] >= c {
                    return bad(format!("columns not strictly increasing in row {i}"));
                }
            }
        }
        if let Some(p) = self.values.iter().position(|v| !v.is_finite()) {
            return bad(format!("non-finite value at position {p}"));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Stored value at `(i, j)`, or zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// Euclidean norm of row `i`.
    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `A·v`.
    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut out = vec![0.0; self.n_rows];
        self.spmv_into(v, &mut out)?;
        Ok(out)
    }

    /// `A·v` written into `out`.
    pub fn spmv_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), SparseError> {
        check_len(self.n_cols, v.len())?;
        check_len(self.n_rows, out.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&c, &a)| a * v[c]).sum();
        }
        Ok(())
    }

    /// `Aᵀ·w`.
    pub fn spmv_transpose(&self, w: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut out = vec![0.0; self.n_cols];
        self.spmv_transpose_into(w, &mut out)?;
        Ok(out)
    }

    /// `Aᵀ·w` written into `out`. Contributions are scattered row by row in
    /// ascending row order.
    pub fn spmv_transpose_into(&self, w: &[f64], out: &mut [f64]) -> Result<(), SparseError> {
        check_len(self.n_rows, w.len())?;
        check_len(self.n_cols, out.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &wi) in w.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &a) in cols.iter().zip(vals) {
                out[c] += a * wi;
            }
        }
        Ok(())
    }

    /// Explicit transpose.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                col_idx[slot] = i;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(i, c)] = v;
            }
        }
        d
    }

    /// Returns `alpha·self + beta·I`; the result keeps a stored diagonal.
    pub fn scale_add_identity(&self, alpha: f64, beta: f64) -> Result<Self, SparseError> {
        if !self.is_square() {
            return Err(SparseError::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        let mut trip = Vec::with_capacity(self.nnz() + self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                trip.push((i, c, alpha * v));
            }
            trip.push((i, i, beta));
        }
        Self::from_triplets(self.n_rows, self.n_cols, &trip)
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), SparseError> {
    if expected != got {
        Err(SparseError::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
