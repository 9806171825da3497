//! Threshold incomplete LU (ILUT) with unrestricted fill.
//!
//! Rows are eliminated in IKJ order without pivoting. While row `i` is being
//! eliminated, any computed entry whose magnitude falls below
//! `drop_tol · ‖a_i‖₂` is discarded; the diagonal is always kept. With
//! `drop_tol = 0` nothing is dropped and the factors are the complete LU.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{check_len, CsrMatrix, SparseError};

const PIVOT_EPS: f64 = 1e-14;

/// Which triangular factor to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriPart {
    Lower,
    Upper,
}

/// `P = L̂·Û` with unit-lower `L̂` (diagonal implicit, strictly lower part
/// stored) and upper `Û` whose rows each start with their diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct IluFactors {
    lower: CsrMatrix,
    upper: CsrMatrix,
    drop_tol: f64,
}

impl IluFactors {
    /// Wraps existing factors after checking the triangular layout.
    pub fn from_parts(
        lower: CsrMatrix,
        upper: CsrMatrix,
        drop_tol: f64,
    ) -> Result<Self, SparseError> {
        let n = lower.n_rows();
        if !lower.is_square() || !upper.is_square() || upper.n_rows() != n {
            return Err(SparseError::InvalidStructure(
                "factors must be square and of equal size".into(),
            ));
        }
        for i in 0..n {
            if lower.row(i).0.iter().any(|&c| c >= i) {
                return Err(SparseError::InvalidStructure(format!(
                    "lower factor row {i} is not strictly lower"
                )));
            }
            let (cols, vals) = upper.row(i);
            if cols.first() != Some(&i) || vals[0] == 0.0 {
                return Err(SparseError::ZeroDiagonal { row: i });
            }
        }
        Ok(Self {
            lower,
            upper,
            drop_tol,
        })
    }

    /// The trivial factorization `L̂ = Û = I`.
    pub fn identity(n: usize) -> Self {
        Self {
            lower: CsrMatrix::zeros(n, n),
            upper: CsrMatrix::identity(n),
            drop_tol: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.upper.n_rows()
    }

    pub fn lower(&self) -> &CsrMatrix {
        &self.lower
    }

    pub fn upper(&self) -> &CsrMatrix {
        &self.upper
    }

    pub fn drop_tol(&self) -> f64 {
        self.drop_tol
    }

    /// Stored entries of both factors (the unit diagonal of `L̂` is not counted).
    pub fn nnz(&self) -> usize {
        self.lower.nnz() + self.upper.nnz()
    }

    /// Solves `L̂y=r`, `Ûy=r`, `L̂ᵀy=r` or `Ûᵀy=r`.
    pub fn triangular_solve(
        &self,
        part: TriPart,
        transposed: bool,
        rhs: &[f64],
    ) -> Result<Vec<f64>, SparseError> {
        let mut x = rhs.to_vec();
        self.solve_in_place(part, transposed, &mut x)?;
        Ok(x)
    }

    /// In-place variant of [`IluFactors::triangular_solve`].
    pub fn solve_in_place(
        &self,
        part: TriPart,
        transposed: bool,
        x: &mut [f64],
    ) -> Result<(), SparseError> {
        let n = self.dim();
        check_len(n, x.len())?;
        match (part, transposed) {
            (TriPart::Lower, false) => {
                for i in 0..n {
                    let (cols, vals) = self.lower.row(i);
                    let s: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
                    x[i] -= s;
                }
            }
            (TriPart::Lower, true) => {
                for i in (0..n).rev() {
                    let xi = x[i];
                    let (cols, vals) = self.lower.row(i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        x[c] -= v * xi;
                    }
                }
            }
            (TriPart::Upper, false) => {
                for i in (0..n).rev() {
                    let (cols, vals) = self.upper.row(i);
                    let d = vals[0];
                    if d == 0.0 {
                        return Err(SparseError::ZeroDiagonal { row: i });
                    }
                    let s: f64 = cols[1..]
                        .iter()
                        .zip(&vals[1..])
                        .map(|(&c, &v)| v * x[c])
                        .sum();
                    x[i] = (x[i] - s) / d;
                }
            }
            (TriPart::Upper, true) => {
                for i in 0..n {
                    let (cols, vals) = self.upper.row(i);
                    let d = vals[0];
                    if d == 0.0 {
                        return Err(SparseError::ZeroDiagonal { row: i });
                    }
                    let xi = x[i] / d;
                    x[i] = xi;
                    for (&c, &v) in cols[1..].iter().zip(&vals[1..]) {
                        x[c] -= v * xi;
                    }
                }
            }
        }
        Ok(())
    }

    /// Multiplies by one factor (or its transpose).
    pub fn apply(
        &self,
        part: TriPart,
        transposed: bool,
        x: &[f64],
    ) -> Result<Vec<f64>, SparseError> {
        let n = self.dim();
        check_len(n, x.len())?;
        let m = match part {
            TriPart::Lower => &self.lower,
            TriPart::Upper => &self.upper,
        };
        let mut y = if transposed {
            m.spmv_transpose(x)?
        } else {
            m.spmv(x)?
        };
        if part == TriPart::Lower {
            y.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        Ok(y)
    }

    /// `P⁻¹·r = Û⁻¹ L̂⁻¹ r`, in place.
    pub fn precondition_in_place(&self, r: &mut [f64]) -> Result<(), SparseError> {
        self.solve_in_place(TriPart::Lower, false, r)?;
        self.solve_in_place(TriPart::Upper, false, r)
    }

    /// `P⁻ᵀ·r = L̂⁻ᵀ Û⁻ᵀ r`, in place.
    pub fn precondition_transpose_in_place(&self, r: &mut [f64]) -> Result<(), SparseError> {
        self.solve_in_place(TriPart::Upper, true, r)?;
        self.solve_in_place(TriPart::Lower, true, r)
    }

    /// `P·x = L̂ Û x`.
    pub fn apply_preconditioner(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        let ux = self.apply(TriPart::Upper, false, x)?;
        self.apply(TriPart::Lower, false, &ux)
    }

    /// `Pᵀ·x = Ûᵀ L̂ᵀ x`.
    pub fn apply_preconditioner_transpose(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        let lx = self.apply(TriPart::Lower, true, x)?;
        self.apply(TriPart::Upper, true, &lx)
    }
}

/// Threshold ILU factorization of a square matrix.
pub fn ilu_factorize(a: &CsrMatrix, drop_tol: f64) -> Result<IluFactors, SparseError> {
    if !a.is_square() {
        return Err(SparseError::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    if !(drop_tol >= 0.0 && drop_tol.is_finite()) {
        return Err(SparseError::InvalidDropTolerance(drop_tol));
    }
    let n = a.n_rows();

    let mut l_ptr = vec![0usize];
    let mut l_idx: Vec<usize> = Vec::new();
    let mut l_val: Vec<f64> = Vec::new();
    let mut u_ptr = vec![0usize];
    let mut u_idx: Vec<usize> = Vec::new();
    let mut u_val: Vec<f64> = Vec::new();
    // offsets of each finished U row, needed while eliminating later rows
    let mut u_rows: Vec<(usize, usize)> = Vec::with_capacity(n);

    let mut work = vec![0.0f64; n];
    let mut in_row = vec![false; n];
    let mut upper_cols: Vec<usize> = Vec::new();
    let mut lower_heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

    for i in 0..n {
        let (cols, vals) = a.row(i);
        let row_norm = a.row_norm(i);
        let tau = drop_tol * row_norm;

        upper_cols.clear();
        for (&c, &v) in cols.iter().zip(vals) {
            work[c] = v;
            in_row[c] = true;
            if c < i {
                lower_heap.push(Reverse(c));
            } else {
                upper_cols.push(c);
            }
        }
        if !in_row[i] {
            in_row[i] = true;
            work[i] = 0.0;
            upper_cols.push(i);
        }

        let mut lower_kept: Vec<(usize, f64)> = Vec::new();
        while let Some(Reverse(k)) = lower_heap.pop() {
            let (ulo, uhi) = u_rows[k];
            let factor = work[k] / u_val[ulo];
            work[k] = 0.0;
            in_row[k] = false;
            if factor.abs() < tau {
                continue;
            }
            lower_kept.push((k, factor));
            for p in ulo + 1..uhi {
                let j = u_idx[p];
                if !in_row[j] {
                    in_row[j] = true;
                    work[j] = 0.0;
                    if j < i {
                        lower_heap.push(Reverse(j));
                    } else {
                        upper_cols.push(j);
                    }
                }
                work[j] -= factor * u_val[p];
            }
        }

        for (k, f) in lower_kept {
            l_idx.push(k);
            l_val.push(f);
        }
        l_ptr.push(l_idx.len());

        upper_cols.sort_unstable();
        let start = u_idx.len();
        for &j in &upper_cols {
            let v = work[j];
            work[j] = 0.0;
            in_row[j] = false;
            if j == i {
                if v.abs() < PIVOT_EPS * row_norm || v == 0.0 {
                    return Err(SparseError::ZeroPivot { row: i, pivot: v });
                }
            } else if v.abs() < tau {
                continue;
            }
            u_idx.push(j);
            u_val.push(v);
        }
        u_ptr.push(u_idx.len());
        u_rows.push((start, u_idx.len()));
    }

    let lower = CsrMatrix::new(n, n, l_ptr, l_idx, l_val)?;
    let upper = CsrMatrix::new(n, n, u_ptr, u_idx, u_val)?;
    Ok(IluFactors {
        lower,
        upper,
        drop_tol,
    })
}
