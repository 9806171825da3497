use serde::{Deserialize, Serialize};

use super::kernel;
use super::NeuralError;

/// Dense row-major tensor of rank at most two.
///
/// Vectors are stored as `n × 1` and scalars as `1 × 1`; `rank` only
/// records how the tensor was created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    rank: u8,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, NeuralError> {
        let (rows, cols) = match *shape {
            [] => (1, 1),
            [n] => (n, 1),
            [r, c] => (r, c),
            _ => {
                return Err(NeuralError::Shape(format!(
                    "rank {} exceeds 2",
                    shape.len()
                )))
            }
        };
        if data.len() != rows * cols {
            return Err(NeuralError::Shape(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            rank: shape.len() as u8,
            data,
        })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NeuralError> {
        Self::new(&[rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            rank: 2,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            rank: 0,
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            rank: 1,
            data,
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self {
            rows: other.rows,
            cols: other.cols,
            rank: other.rank,
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self.rank {
            0 => vec![],
            1 => vec![self.rows],
            _ => vec![self.rows, self.cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }
}

/// `C = op(A)·op(B)` with `C` of shape `m × n`, overwriting `c` when `beta`
/// is zero and accumulating otherwise.
///
/// Operands are row-major; `ta`/`tb` read them transposed through strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(
        a.len() >= m * k && b.len() >= k * n && c.len() >= m * n,
        "gemm operand too short"
    );
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if n.is_multiple_of(8) && kernel::available() {
        let bt;
        let b = if tb {
            bt = transpose(b, n, k);
            &bt[..]
        } else {
            b
        };
        let (rsa, csa) = (rsa as usize, csa as usize);
        // SAFETY: AVX-512F was detected, `n` is a multiple of 8 and the
        // assertion above bounds every access.
        unsafe { kernel::dgemm(m, k, n, a, rsa, csa, b, beta, c) };
        return;
    }
    // SAFETY: the assertion above keeps every strided access in bounds and
    // `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major `rows × cols` to row-major `cols × rows`.
fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for (r, row) in x[..rows * cols].chunks(cols).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[c * rows + r] = v;
        }
    }
    out
}
