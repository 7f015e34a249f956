//! Inner loops. Written so the compiler can vectorize them: `axpy` is
//! element-independent and `dot` keeps eight explicit partial sums.

use crate::Scalar;

#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    let mut s = T::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        s += a * b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + s
}

/// `out[r, :] = sum_i a[r, i] * b[i, :]` accumulated into `out`.
/// `a` is `rows x inner`, `b` is `inner x cols`, all row-major.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], rows: usize, inner: usize, cols: usize) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for r in 0..rows {
        let orow = &mut out[r * cols..(r + 1) * cols];
        let arow = &a[r * inner..(r + 1) * inner];
        for (i, &av) in arow.iter().enumerate() {
            if av != T::zero() {
                axpy(av, &b[i * cols..(i + 1) * cols], orow);
            }
        }
    }
}

/// `out[i, j] += sum_r a[r, i] * b[r, j]`, i.e. `A^T B` for `a: rows x m`, `b: rows x n`.
pub fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], rows: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), rows * m);
    debug_assert_eq!(b.len(), rows * n);
    debug_assert_eq!(out.len(), m * n);
    for r in 0..rows {
        let arow = &a[r * m..(r + 1) * m];
        let brow = &b[r * n..(r + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av != T::zero() {
                axpy(av, brow, &mut out[i * n..(i + 1) * n]);
            }
        }
    }
}

/// `out[r, i] += sum_j a[r, j] * b[i, j]`, i.e. `A B^T` for `a: rows x n`, `b: m x n`.
pub fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], rows: usize, n: usize, m: usize) {
    debug_assert_eq!(a.len(), rows * n);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), rows * m);
    for r in 0..rows {
        let arow = &a[r * n..(r + 1) * n];
        for i in 0..m {
            out[r * m + i] += dot(arow, &b[i * n..(i + 1) * n]);
        }
    }
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}
