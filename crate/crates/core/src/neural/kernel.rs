//! AVX-512 register-tiled GEMM for the layer shapes used in training.
//!
//! Only `B` is read by vector loads, so it must have contiguous rows with a
//! width divisible by 8; `A` is read by scalar broadcasts and may have any
//! strides. Callers fall back to a generic GEMM otherwise.

#[cfg(target_arch = "x86_64")]
mod imp {
    use std::arch::x86_64::*;
    use std::sync::OnceLock;

    const MR: usize = 6;
    const KC: usize = 256;

    pub fn available() -> bool {
        static AVX512: OnceLock<bool> = OnceLock::new();
        *AVX512.get_or_init(|| is_x86_feature_detected!("avx512f"))
    }

    /// `C = A·B + beta·C` for `A` of shape `m × k` at strides `(rsa, csa)`,
    /// `B` of shape `k × n` row-major, `C` of shape `m × n` row-major.
    ///
    /// # Safety
    /// AVX-512F must be available, `n % 8 == 0`, and every strided `A`
    /// index plus `k·n` and `m·n` must lie within the slices.
    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    pub unsafe fn dgemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: usize,
        csa: usize,
        b: &[f64],
        beta: f64,
        c: &mut [f64],
    ) {
        if beta == 0.0 {
            c[..m * n].fill(0.0);
        } else if beta != 1.0 {
            c[..m * n].iter_mut().for_each(|v| *v *= beta);
        }
        let (a, b, c) = (a.as_ptr(), b.as_ptr(), c.as_mut_ptr());
        let mut p0 = 0;
        while p0 < k {
            let kc = KC.min(k - p0);
            let mut i = 0;
            while i < m {
                let rows = MR.min(m - i);
                let mut j = 0;
                while j + 32 <= n {
                    tile::<4>(
                        rows,
                        kc,
                        a.add(i * rsa + p0 * csa),
                        rsa,
                        csa,
                        b.add(p0 * n + j),
                        n,
                        c.add(i * n + j),
                    );
                    j += 32;
                }
                while j < n {
                    tile::<1>(
                        rows,
                        kc,
                        a.add(i * rsa + p0 * csa),
                        rsa,
                        csa,
                        b.add(p0 * n + j),
                        n,
                        c.add(i * n + j),
                    );
                    j += 8;
                }
                i += MR;
            }
            p0 += kc;
        }
    }

    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    #[inline]
    unsafe fn tile<const NR: usize>(
        rows: usize,
        kc: usize,
        a: *const f64,
        rsa: usize,
        csa: usize,
        b: *const f64,
        ldb: usize,
        c: *mut f64,
    ) {
        let mut acc = [[_mm512_setzero_pd(); NR]; MR];
        for (r, row) in acc.iter_mut().enumerate().take(rows) {
            for (q, v) in row.iter_mut().enumerate() {
                *v = _mm512_loadu_pd(c.add(r * ldb + 8 * q));
            }
        }
        if rows == MR {
            for p in 0..kc {
                let bp = b.add(p * ldb);
                let mut bv = [_mm512_setzero_pd(); NR];
                for (q, v) in bv.iter_mut().enumerate() {
                    *v = _mm512_loadu_pd(bp.add(8 * q));
                }
                for (r, row) in acc.iter_mut().enumerate() {
                    let av = _mm512_set1_pd(*a.add(r * rsa + p * csa));
                    for (v, &w) in row.iter_mut().zip(&bv) {
                        *v = _mm512_fmadd_pd(av, w, *v);
                    }
                }
            }
        } else {
            for p in 0..kc {
                let bp = b.add(p * ldb);
                let mut bv = [_mm512_setzero_pd(); NR];
                for (q, v) in bv.iter_mut().enumerate() {
                    *v = _mm512_loadu_pd(bp.add(8 * q));
                }
                for (r, row) in acc.iter_mut().enumerate().take(rows) {
                    let av = _mm512_set1_pd(*a.add(r * rsa + p * csa));
                    for (v, &w) in row.iter_mut().zip(&bv) {
                        *v = _mm512_fmadd_pd(av, w, *v);
                    }
                }
            }
        }
        for (r, row) in acc.iter().enumerate().take(rows) {
            for (q, v) in row.iter().enumerate() {
                _mm512_storeu_pd(c.add(r * ldb + 8 * q), *v);
            }
        }
    }
}

#[cfg(not(target_arch = "x86_64"))]
mod imp {
    pub fn available() -> bool {
        false
    }

    #[allow(clippy::too_many_arguments)]
    pub unsafe fn dgemm(
        _: usize,
        _: usize,
        _: usize,
        _: &[f64],
        _: usize,
        _: usize,
        _: &[f64],
        _: f64,
        _: &mut [f64],
    ) {
        unreachable!("no vector kernel on this architecture")
    }
}

pub(crate) use imp::{available, dgemm};
