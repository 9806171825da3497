//! Dense row-major matrices and the partial-pivot LU / power-iteration
//! oracles. Capped at [`DENSE_SIZE_LIMIT`] so that oracle checks stay in the
//! seconds range.

use std::ops::{Index, IndexMut};

use super::{check_len, norm2, SparseError};

/// Largest dimension accepted by the dense oracles.
pub const DENSE_SIZE_LIMIT: usize = 4096;

const SPECTRAL_TOL: f64 = 1e-10;
const SPECTRAL_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self {
            n_rows,
            n_cols,
            data: rows.concat(),
        }
    }

    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        check_len(self.n_cols, v.len())?;
        Ok((0..self.n_rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matvec_transpose(&self, w: &[f64]) -> Result<Vec<f64>, SparseError> {
        check_len(self.n_rows, w.len())?;
        let mut out = vec![0.0; self.n_cols];
        for (i, &wi) in w.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * wi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.n_cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

fn guard_size(n: usize) -> Result<(), SparseError> {
    if n > DENSE_SIZE_LIMIT {
        Err(SparseError::TooLarge {
            n,
            max: DENSE_SIZE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Packed LU factors with row permutation: `P·A = L·U`, unit-lower `L`
/// stored below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, SparseError> {
        if a.n_rows != a.n_cols {
            return Err(SparseError::NotSquare {
                rows: a.n_rows,
                cols: a.n_cols,
            });
        }
        let n = a.n_rows;
        guard_size(n)?;
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
                return Err(SparseError::Singular { col: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    let (top, bottom) = lu.data.split_at_mut(i * n);
                    let krow = &top[k * n + k + 1..k * n + n];
                    for (x, &u) in bottom[k + 1..n].iter_mut().zip(krow) {
                        *x -= f * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A·x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        check_len(self.n, rhs.len())?;
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solves `Aᵀ·x = rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        check_len(self.n, rhs.len())?;
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P
        let mut y = rhs.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(j, i)] * y[j]).sum();
            y[i] = (y[i] - s) / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(j, i)] * y[j]).sum();
            y[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(x)
    }

    /// Explicit inverse, column by column.
    pub fn inverse(&self) -> Result<DenseMatrix, SparseError> {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            e[j] = 0.0;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Solves `A·x = rhs` with partial-pivot LU.
pub fn dense_lu_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
    DenseLu::factor(a)?.solve(rhs)
}

/// Largest singular value by power iteration on `AᵀA`, started from the
/// normalised all-ones vector.
pub fn dense_spectral_norm(a: &DenseMatrix) -> Result<f64, SparseError> {
    guard_size(a.n_rows.max(a.n_cols))?;
    if a.n_cols == 0 {
        return Ok(0.0);
    }
    let mut v = vec![1.0 / (a.n_cols as f64).sqrt(); a.n_cols];
    let mut estimate = 0.0;
    for _ in 0..SPECTRAL_MAX_ITERS {
        let av = a.matvec(&v)?;
        let z = a.matvec_transpose(&av)?;
        // Rayleigh quotient of AᵀA at unit v
        let lambda: f64 = v.iter().zip(&z).map(|(x, y)| x * y).sum();
        let zn = norm2(&z);
        if zn == 0.0 {
            return Ok(0.0);
        }
        let converged = (lambda - estimate).abs() <= SPECTRAL_TOL * lambda.abs();
        estimate = lambda;
        if converged {
            return Ok(lambda.max(0.0).sqrt());
        }
        v.iter_mut().zip(&z).for_each(|(x, y)| *x = y / zn);
    }
    Err(SparseError::NoConvergence {
        iterations: SPECTRAL_MAX_ITERS,
        estimate: estimate.max(0.0).sqrt(),
    })
}
