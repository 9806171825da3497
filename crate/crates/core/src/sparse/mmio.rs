//! Matrix Market coordinate files and plain whitespace-separated vectors.

use std::fmt::Write as _;

use super::{CsrMatrix, SparseError};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Serialises `a` as a 1-indexed Matrix Market coordinate file.
pub fn write_matrix_market(a: &CsrMatrix) -> String {
    let mut s = String::with_capacity(32 * a.nnz() + 64);
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            let _ = writeln!(s, "{} {} {:e}", i + 1, c + 1, v);
        }
    }
    s
}

pub fn read_matrix_market(text: &str) -> Result<CsrMatrix, SparseError> {
    let err = |m: &str| SparseError::MatrixMarket(m.to_string());
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty input"))?;
    if !header.trim().eq_ignore_ascii_case(HEADER) {
        return Err(err("unsupported header, expected coordinate real general"));
    }
    let mut body = lines.filter(|l| !l.trim().is_empty() && !l.starts_with('%'));
    let size = body.next().ok_or_else(|| err("missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err("bad size line")))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 {
        return Err(err("size line needs rows, cols and nnz"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut trip = Vec::with_capacity(nnz);
    for line in body {
        let mut it = line.split_whitespace();
        let (Some(r), Some(c), Some(v)) = (it.next(), it.next(), it.next()) else {
            return Err(err("entry line needs row, col and value"));
        };
        let r: usize = r.parse().map_err(|_| err("bad row index"))?;
        let c: usize = c.parse().map_err(|_| err("bad column index"))?;
        let v: f64 = v.parse().map_err(|_| err("bad value"))?;
        if r == 0 || c == 0 {
            return Err(err("indices are 1-based"));
        }
        trip.push((r - 1, c - 1, v));
    }
    if trip.len() != nnz {
        return Err(err("entry count does not match the size line"));
    }
    CsrMatrix::from_triplets(rows, cols, &trip)
}

/// One value per line.
pub fn write_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(24 * v.len());
    for x in v {
        let _ = writeln!(s, "{x:e}");
    }
    s
}

pub fn read_vector(text: &str) -> Result<Vec<f64>, SparseError> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| SparseError::MatrixMarket(format!("bad vector entry {t:?}")))
        })
        .collect()
}
