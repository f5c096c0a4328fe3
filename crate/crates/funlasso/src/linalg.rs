//! Minimal dense symmetric eigensolver (cyclic Jacobi).
//!
//! The matrices handled here are small Gram matrices (rarely above a few
//! hundred rows), where Jacobi is simple, accurate and fast enough. Kept
//! private; tests cross-check it against an external dense solver.

use crate::scalar::Scalar;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted decreasing.
pub(crate) struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<T>>,
}

/// Jacobi eigendecomposition of the symmetric `n x n` matrix `a` (row-major).
///
/// Only the lower/upper symmetry of `a` is assumed; the strictly asymmetric
/// part, if any, is averaged away up front.
pub(crate) fn symmetric_eigen<T: Scalar>(a: &[T], n: usize) -> SymmetricEigen<T> {
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    if n == 0 {
        return SymmetricEigen { values: vec![], vectors: vec![] };
    }
    let half = T::from_f64_lossy(0.5);
    let mut m: Vec<T> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            (a[i * n + j] + a[j * n + i]) * half
        })
        .collect();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let scale = (0..n)
        .map(|i| m[i * n + i].abs())
        .fold(T::zero(), T::max)
        .max(T::one());
    let tol = T::epsilon() * scale;
    let max_sweeps = 64;

    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[i * n + j].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol * T::from_f64_lossy(1e-3) {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (T::from_f64_lossy(2.0) * apq);
                // Stable tangent of the rotation angle.
                let t = {
                    let denom = theta.abs() + (theta * theta + T::one()).sqrt();
                    let t = T::one() / denom;
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    SymmetricEigen { values, vectors }
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub(crate) fn eigen_extrema<T: Scalar>(a: &[T], n: usize) -> (T, T) {
    let eig = symmetric_eigen(a, n);
    (
        *eig.values.last().expect("empty matrix"),
        eig.values[0],
    )
}
