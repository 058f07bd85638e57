//! Small dense linear-algebra helpers for desk-scale matrices.

use crate::diffcore::Tensor;
use crate::scalar::Scalar;

/// `y = A x` for a rank-2 tensor.
pub fn matvec<T: Scalar>(a: &Tensor<T>, x: &[T]) -> Vec<T> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    debug_assert_eq!(n, x.len());
    let mut y = vec![T::zero(); m];
    for i in 0..m {
        let row = &a.data()[i * n..(i + 1) * n];
        y[i] = row.iter().zip(x).map(|(&aij, &xj)| aij * xj).sum();
    }
    y
}

/// `C = A B` for rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    debug_assert_eq!(k, b.shape()[0]);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            if aip == T::zero() {
                continue;
            }
            for j in 0..n {
                out.data_mut()[i * n + j] += aip * b.data()[p * n + j];
            }
        }
    }
    out
}

/// Transpose of a rank-2 tensor.
pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = Tensor::zeros(vec![n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data_mut()[j * m + i] = a.data()[i * n + j];
        }
    }
    out
}

/// Cholesky factor of a symmetric positive-definite matrix; `None` when a
/// pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &Tensor<T>) -> Option<Tensor<T>> {
    let n = a.shape()[0];
    debug_assert_eq!(a.shape()[1], n);
    let mut l = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.data()[i * n + j];
            for p in 0..j {
                acc -= l.data()[i * n + p] * l.data()[j * n + p];
            }
            if i == j {
                if acc <= T::zero() {
                    return None;
                }
                l.data_mut()[i * n + i] = acc.sqrt();
            } else {
                l.data_mut()[i * n + j] = acc / l.data()[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` for symmetric positive-definite `A` via Cholesky.
pub fn cholesky_solve<T: Scalar>(a: &Tensor<T>, b: &[T]) -> Option<Vec<T>> {
    let l = cholesky(a)?;
    let n = b.len();
    // forward substitution: L y = b
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = b[i];
        for p in 0..i {
            acc -= l.data()[i * n + p] * y[p];
        }
        y[i] = acc / l.data()[i * n + i];
    }
    // back substitution: L^T x = y
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for p in i + 1..n {
            acc -= l.data()[p * n + i] * x[p];
        }
        x[i] = acc / l.data()[i * n + i];
    }
    Some(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues<T: Scalar>(a: &Tensor<T>) -> Vec<T> {
    let n = a.shape()[0];
    debug_assert_eq!(a.shape()[1], n);
    let mut m = a.data().to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m[idx(i, j)] * m[idx(i, j)];
            }
        }
        if off.as_f64() < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[idx(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(q, q)];
                let theta = (aqq - app) / (T::from_f64(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = m[idx(i, p)];
                    let aiq = m[idx(i, q)];
                    m[idx(i, p)] = c * aip - s * aiq;
                    m[idx(i, q)] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = m[idx(p, j)];
                    let aqj = m[idx(q, j)];
                    m[idx(p, j)] = c * apj - s * aqj;
                    m[idx(q, j)] = s * apj + c * aqj;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m[idx(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eig
}
