#![allow(dead_code)]

use pcp::sparse::{CsrMatrix, DenseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Sparse matrix with about `density·n²` off-diagonal entries and a
/// diagonal that strictly dominates each row.
pub fn diag_dominant(rng: &mut impl Rng, n: usize, density: f64) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                let v = rng.gen_range(-1.0..1.0);
                sum += f64::abs(v);
                t.push((i, j, v));
            }
        }
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        t.push((i, i, sign * (sum + rng.gen_range(0.5..1.5))));
    }
    CsrMatrix::from_triplets(n, n, &t).unwrap()
}

/// Plain triple loop `A·x` over a dense copy.
pub fn dense_matvec(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..a.n_rows())
        .map(|i| a.row(i).iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

/// Doolittle LU without pivoting: `(unit lower, upper)` as dense rows.
#[allow(clippy::needless_range_loop)]
pub fn doolittle(a: &DenseMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.n_rows();
    let mut l = vec![vec![0.0; n]; n];
    let mut u = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..i).map(|k| l[i][k] * u[k][j]).sum();
            u[i][j] = a.row(i)[j] - s;
        }
        l[i][i] = 1.0;
        for j in i + 1..n {
            let s: f64 = (0..i).map(|k| l[j][k] * u[k][i]).sum();
            l[j][i] = (a.row(j)[i] - s) / u[i][i];
        }
    }
    (l, u)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}
