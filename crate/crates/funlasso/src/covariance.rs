//! Empirical covariance operator, blockwise PCA basis, projections and the
//! restricted-eigenvalue quantities used for dimension control.
//!
//! The basis is built per block (eigenpairs of each block covariance
//! operator) and merged into one global ordering with nonincreasing
//! eigenvalues. Every global basis element lives in exactly one block, which
//! is what makes the support of a projected coefficient nested in the
//! support of the unprojected one.

use crate::error::{Error, Result};
use crate::hilbert::{Coefficient, Dataset, SpaceSpec};
use crate::linalg::{eigen_extrema, symmetric_eigen};
use crate::scalar::Scalar;

/// Relative eigenvalue cutoff treating a direction as numerically null.
pub const DEFAULT_TOL_RANK: f64 = 1e-10;

/// Eigenpairs of one block covariance operator, eigenvalues decreasing.
#[derive(Clone, Debug)]
pub struct BlockEigen<T> {
    eigenvalues: Vec<T>,
    /// Coordinate values of the orthonormal eigen-elements.
    elements: Vec<Vec<T>>,
}

impl<T: Scalar> BlockEigen<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn element(&self, k: usize) -> &[T] {
        &self.elements[k]
    }
}

/// Blockwise PCA basis with a global decreasing-eigenvalue ordering.
#[derive(Clone, Debug)]
pub struct PcaBasis<T> {
    space: SpaceSpec<T>,
    blocks: Vec<BlockEigen<T>>,
    /// Global order: `order[k] = (block, within-block index)`.
    order: Vec<(usize, usize)>,
}

impl<T: Scalar> PcaBasis<T> {
    /// Total number of global basis elements.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn space(&self) -> &SpaceSpec<T> {
        &self.space
    }

    pub fn block(&self, j: usize) -> &BlockEigen<T> {
        &self.blocks[j]
    }

    pub fn order(&self) -> &[(usize, usize)] {
        &self.order
    }

    /// Block index and coordinate values of the `k`-th global element.
    pub fn global_element(&self, k: usize) -> (usize, &[T]) {
        let (j, kk) = self.order[k];
        (j, self.blocks[j].element(kk))
    }

    /// Eigenvalues along the global ordering (nonincreasing).
    pub fn merged_eigenvalues(&self) -> Vec<T> {
        self.order
            .iter()
            .map(|&(j, kk)| self.blocks[j].eigenvalues[kk])
            .collect()
    }
}

/// The leading `m x m` restriction of the joint covariance operator to the
/// global basis.
#[derive(Clone, Debug)]
pub struct GramRestriction<T> {
    m: usize,
    /// Row-major symmetric matrix.
    matrix: Vec<T>,
}

impl<T: Scalar> GramRestriction<T> {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn entry(&self, k: usize, l: usize) -> T {
        self.matrix[k * self.m + l]
    }
}

/// Apply the empirical covariance operator: `(1/n) sum_i <beta, X_i> X_i`.
pub fn apply_gamma_hat<T: Scalar>(
    beta: &Coefficient<T>,
    data: &Dataset<T>,
) -> Result<Coefficient<T>> {
    let t = data.predict(beta)?;
    let n = data.n();
    let inv_n = T::one() / T::from_count(n);
    let mut out = Coefficient::zeros(data.space());
    for j in 0..data.n_blocks() {
        let len = data.space().block(j).len();
        let mat = data.block_matrix(j);
        let vals = out.block_mut(j).values_mut();
        for (g, v) in vals.iter_mut().enumerate().take(len) {
            let col = &mat[g * n..(g + 1) * n];
            let mut acc = T::zero();
            for (&ti, &x) in t.iter().zip(col) {
                acc = acc + ti * x;
            }
            *v = acc * inv_n;
        }
    }
    Ok(out)
}

/// Eigenpairs of one block, solved on the cheaper side of the problem.
///
/// When the coordinate dimension is at most `n` the eigenproblem is solved
/// directly in coordinates after symmetrising with the square roots of the
/// quadrature weights. Otherwise it goes through the `n x n` matrix of
/// pairwise observation inner products and the eigenvectors are mapped back
/// to coordinate space; both routes produce the same eigenpairs.
fn block_pca<T: Scalar>(n: usize, len: usize, mat: &[T], w: &[T], tol_rank: T) -> BlockEigen<T> {
    let inv_n = T::one() / T::from_count(n);
    let sqrt_w: Vec<T> = w.iter().map(|v| v.sqrt()).collect();

    let (mut values, mut elements): (Vec<T>, Vec<Vec<T>>) = if len <= n {
        let mut a = vec![T::zero(); len * len];
        for g in 0..len {
            for h in g..len {
                let cg = &mat[g * n..(g + 1) * n];
                let ch = &mat[h * n..(h + 1) * n];
                let mut acc = T::zero();
                for (&x, &y) in cg.iter().zip(ch) {
                    acc = acc + x * y;
                }
                let v = acc * inv_n * sqrt_w[g] * sqrt_w[h];
                a[g * len + h] = v;
                a[h * len + g] = v;
            }
        }
        let eig = symmetric_eigen(&a, len);
        let elements = eig
            .vectors
            .into_iter()
            .map(|v| v.iter().zip(&sqrt_w).map(|(&x, &s)| x / s).collect())
            .collect();
        (eig.values, elements)
    } else {
        let mut k = vec![T::zero(); n * n];
        for g in 0..len {
            let col = &mat[g * n..(g + 1) * n];
            let wg = w[g];
            for i in 0..n {
                let c = wg * col[i];
                if c == T::zero() {
                    continue;
                }
                for i2 in i..n {
                    k[i * n + i2] = k[i * n + i2] + c * col[i2];
                }
            }
        }
        for i in 0..n {
            for i2 in 0..i {
                k[i * n + i2] = k[i2 * n + i];
            }
        }
        for v in k.iter_mut() {
            *v = *v * inv_n;
        }
        let eig = symmetric_eigen(&k, n);
        let mut elements = Vec::with_capacity(n);
        for (mu, u) in eig.values.iter().zip(&eig.vectors) {
            if *mu <= T::zero() {
                elements.push(vec![T::zero(); len]);
                continue;
            }
            let scale = T::one() / (T::from_count(n) * *mu).sqrt();
            let mut e = vec![T::zero(); len];
            for (g, ev) in e.iter_mut().enumerate() {
                let col = &mat[g * n..(g + 1) * n];
                let mut acc = T::zero();
                for (&ui, &x) in u.iter().zip(col) {
                    acc = acc + ui * x;
                }
                *ev = acc * scale;
            }
            elements.push(e);
        }
        (eig.values, elements)
    };

    // Numerical-rank cutoff relative to the block's leading eigenvalue.
    let lead = values.first().copied().unwrap_or(T::zero());
    let threshold = tol_rank * if lead > T::zero() { lead } else { T::one() };
    let keep = values.iter().take_while(|&&v| v > threshold).count();
    values.truncate(keep);
    elements.truncate(keep);

    // Re-normalise and fix signs: largest-magnitude coordinate positive.
    for e in elements.iter_mut() {
        let norm = crate::hilbert::weighted_dot(e, e, w).sqrt();
        if norm > T::zero() {
            let inv = T::one() / norm;
            for v in e.iter_mut() {
                *v = *v * inv;
            }
        }
        let mut idx = 0;
        let mut best = T::zero();
        for (g, v) in e.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = g;
            }
        }
        if e[idx] < T::zero() {
            for v in e.iter_mut() {
                *v = -*v;
            }
        }
    }

    BlockEigen { eigenvalues: values, elements }
}

/// Blockwise PCA basis of a (centered) dataset.
///
/// Eigenvalues below `tol_rank` times the block's leading eigenvalue are
/// discarded; an all-zero block contributes no basis elements.
pub fn pca_basis<T: Scalar>(data: &Dataset<T>, tol_rank: T) -> Result<PcaBasis<T>> {
    if !(tol_rank >= T::zero()) {
        return Err(Error::InvalidParameter("tol_rank must be >= 0".into()));
    }
    let n = data.n();
    let blocks: Vec<BlockEigen<T>> = (0..data.n_blocks())
        .map(|j| {
            let spec = data.space().block(j);
            block_pca(n, spec.len(), data.block_matrix(j), spec.weights(), tol_rank)
        })
        .collect();

    let mut order: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(j, b)| (0..b.len()).map(move |k| (j, k)))
        .collect();
    // Decreasing eigenvalues; ties broken by (block, within-block) index.
    order.sort_by(|&(j1, k1), &(j2, k2)| {
        let a = blocks[j1].eigenvalues[k1];
        let b = blocks[j2].eigenvalues[k2];
        b.partial_cmp(&a)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((j1, k1).cmp(&(j2, k2)))
    });

    Ok(PcaBasis { space: data.space().clone(), blocks, order })
}

/// Orthonormal projection of `beta` onto the span of the first `m` global
/// basis elements.
pub fn project<T: Scalar>(
    beta: &Coefficient<T>,
    basis: &PcaBasis<T>,
    m: usize,
) -> Result<Coefficient<T>> {
    if m > basis.len() {
        return Err(Error::DimensionOutOfRange { dim: m, size: basis.len() });
    }
    if !beta.conforms_to(&basis.space) {
        return Err(Error::SpecMismatch("project".into()));
    }
    let mut out = Coefficient::zeros(&basis.space);
    for k in 0..m {
        let (j, e) = basis.global_element(k);
        let w = basis.space.block(j).weights();
        let c = crate::hilbert::weighted_dot(beta.block(j).values(), e, w);
        let vals = out.block_mut(j).values_mut();
        for (v, &ev) in vals.iter_mut().zip(e) {
            *v = *v + c * ev;
        }
    }
    Ok(out)
}

/// Scores of every observation on the first `m` global basis elements,
/// column-major (`scores[k * n + i]`).
pub fn scores<T: Scalar>(data: &Dataset<T>, basis: &PcaBasis<T>, m: usize) -> Result<Vec<T>> {
    if m > basis.len() {
        return Err(Error::DimensionOutOfRange { dim: m, size: basis.len() });
    }
    if !data.space().compatible(&basis.space) {
        return Err(Error::SpecMismatch("scores".into()));
    }
    let n = data.n();
    let mut out = vec![T::zero(); n * m];
    for k in 0..m {
        let (j, e) = basis.global_element(k);
        let w = basis.space.block(j).weights();
        let mat = data.block_matrix(j);
        let dst = &mut out[k * n..(k + 1) * n];
        for (g, (&ev, &wv)) in e.iter().zip(w).enumerate() {
            let c = wv * ev;
            if c == T::zero() {
                continue;
            }
            let col = &mat[g * n..(g + 1) * n];
            for (d, &x) in dst.iter_mut().zip(col) {
                *d = *d + c * x;
            }
        }
    }
    Ok(out)
}

fn gram_from_scores<T: Scalar>(s: &[T], n: usize, m: usize) -> Vec<T> {
    let inv_n = T::one() / T::from_count(n);
    let mut g = vec![T::zero(); m * m];
    for k in 0..m {
        for l in k..m {
            let ck = &s[k * n..(k + 1) * n];
            let cl = &s[l * n..(l + 1) * n];
            let mut acc = T::zero();
            for (&a, &b) in ck.iter().zip(cl) {
                acc = acc + a * b;
            }
            let v = acc * inv_n;
            g[k * m + l] = v;
            g[l * m + k] = v;
        }
    }
    g
}

/// The `m x m` restriction of the joint covariance operator.
pub fn gram_restriction<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    m: usize,
) -> Result<GramRestriction<T>> {
    let s = scores(data, basis, m)?;
    Ok(GramRestriction { m, matrix: gram_from_scores(&s, data.n(), m) })
}

/// Smallest singular value of the restricted empirical design: the square
/// root of the smallest eigenvalue of the `m x m` covariance restriction,
/// clamped below at zero. Nonincreasing in `m`.
pub fn restricted_eigenvalue<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    m: usize,
) -> Result<T> {
    if m == 0 {
        return Err(Error::DimensionOutOfRange { dim: 0, size: basis.len() });
    }
    let gram = gram_restriction(data, basis, m)?;
    let (min, _) = eigen_extrema(&gram.matrix, m);
    Ok(min.max(T::zero()).sqrt())
}

/// Largest dimension `m` such that the `m x m` covariance restriction is
/// numerically nonsingular; 0 if even `m = 1` is singular.
pub fn max_dimension<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    tol_rank: T,
) -> Result<usize> {
    max_dimension_capped(data, basis, tol_rank, basis.len())
}

/// `max_dimension` restricted to `m <= cap`; callers that only need small
/// dimensions avoid scanning the whole basis.
pub(crate) fn max_dimension_capped<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    tol_rank: T,
    cap: usize,
) -> Result<usize> {
    let k = basis.len().min(cap).min(data.n());
    if k == 0 {
        return Ok(0);
    }
    let s = scores(data, basis, k)?;
    let gram = gram_from_scores(&s, data.n(), k);

    // lambda_min(m) is nonincreasing and lambda_max(m) nondecreasing in m
    // (eigenvalue interlacing), so the nonsingularity predicate is monotone
    // and binary search applies.
    let pred = |m: usize| -> bool {
        let mut sub = vec![T::zero(); m * m];
        for r in 0..m {
            sub[r * m..(r + 1) * m].copy_from_slice(&gram[r * k..r * k + m]);
        }
        let (min, max) = eigen_extrema(&sub, m);
        min > tol_rank * max
    };
    let (mut lo, mut hi) = (0usize, k);
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}
