//! Shared oracles and generators for the integration suites.
//!
//! Everything here is deliberately independent of the library's solver
//! path: the proximal-gradient reference works on dense matrices, the
//! ridge reference is a dense linear solve, and eigenvalue checks go
//! through nalgebra.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use funlasso::hilbert::{BlockElement, BlockSpec, Coefficient, Dataset, SpaceSpec};

pub fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

pub fn rel_close(a: f64, b: f64, tol: f64) {
    let denom = b.abs().max(1e-30);
    assert!(
        ((a - b) / denom).abs() <= tol,
        "{a} vs {b} (relative tol {tol})"
    );
}

/// A small instance in both library and dense form.
pub struct DenseInstance {
    pub dataset: Dataset<f64>,
    /// Row-major n x d design (all block weights are 1).
    pub design: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-open coordinate ranges of each block.
    pub groups: Vec<(usize, usize)>,
    pub n: usize,
    pub d: usize,
}

/// Random instance with p <= 4 scalar/low-dimensional vector blocks and
/// n <= 30, moderately correlated columns and a sparse ground truth.
pub fn random_dense_instance(seed: u64) -> DenseInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 1 + (rng.gen::<u64>() % 4) as usize;
    let n = 10 + (rng.gen::<u64>() % 21) as usize;
    let dims: Vec<usize> = (0..p).map(|_| 1 + (rng.gen::<u64>() % 3) as usize).collect();
    let d: usize = dims.iter().sum();

    // Common latent factor induces cross-block correlation.
    let latent: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let mut design = vec![0.0; n * d];
    for i in 0..n {
        for c in 0..d {
            design[i * d + c] = 0.5 * latent[i] + (rng.gen::<f64>() * 2.0 - 1.0);
        }
    }
    let mut truth = vec![0.0; d];
    truth[0] = 1.0 + rng.gen::<f64>();
    if d > 2 {
        truth[d - 1] = -0.5 - rng.gen::<f64>();
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = (0..d).map(|c| design[i * d + c] * truth[c]).sum();
            signal + 0.05 * (rng.gen::<f64>() - 0.5)
        })
        .collect();

    let mut groups = Vec::with_capacity(p);
    let mut start = 0;
    let specs: Vec<BlockSpec<f64>> = dims
        .iter()
        .map(|&dim| {
            groups.push((start, start + dim));
            start += dim;
            if dim == 1 {
                BlockSpec::scalar()
            } else {
                BlockSpec::vector(dim).unwrap()
            }
        })
        .collect();
    let space = SpaceSpec::new(specs);
    let rows: Vec<Vec<BlockElement<f64>>> = (0..n)
        .map(|i| {
            groups
                .iter()
                .enumerate()
                .map(|(j, &(lo, hi))| {
                    let vals = design[i * d + lo..i * d + hi].to_vec();
                    BlockElement::new(Arc::new(space.block(j).clone()), vals).unwrap()
                })
                .collect()
        })
        .collect();
    let dataset = Dataset::from_rows(space, rows, y.clone()).unwrap();
    DenseInstance { dataset, design, y, groups, n, d }
}

/// Objective of the dense group-lasso problem:
/// `(1/n)||y - X b||^2 + 2 sum_j lambda_j ||b_j||`.
pub fn dense_objective(inst: &DenseInstance, lambda: &[f64], b: &[f64]) -> f64 {
    let mut rss = 0.0;
    for i in 0..inst.n {
        let pred: f64 = (0..inst.d).map(|c| inst.design[i * inst.d + c] * b[c]).sum();
        let r = inst.y[i] - pred;
        rss += r * r;
    }
    let mut pen = 0.0;
    for (j, &(lo, hi)) in inst.groups.iter().enumerate() {
        let norm: f64 = b[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt();
        pen += lambda[j] * norm;
    }
    rss / inst.n as f64 + 2.0 * pen
}

/// Independent proximal-gradient (ISTA) reference solver for the dense
/// group lasso, run to tight tolerance.
pub fn proximal_gradient_reference(
    inst: &DenseInstance,
    lambda: &[f64],
    max_iter: usize,
) -> Vec<f64> {
    let (n, d) = (inst.n, inst.d);
    // Lipschitz constant of the gradient via power iteration on X^T X.
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lmax = 1.0;
    for _ in 0..500 {
        // w = X^T X v
        let mut xv = vec![0.0; n];
        for i in 0..n {
            xv[i] = (0..d).map(|c| inst.design[i * d + c] * v[c]).sum();
        }
        let mut w = vec![0.0; d];
        for i in 0..n {
            for c in 0..d {
                w[c] += inst.design[i * d + c] * xv[i];
            }
        }
        lmax = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lmax == 0.0 {
            break;
        }
        for c in 0..d {
            v[c] = w[c] / lmax;
        }
    }
    let lipschitz = 2.0 * lmax / n as f64;
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut b = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for _ in 0..max_iter {
        let mut resid = vec![0.0; n];
        for i in 0..n {
            let pred: f64 = (0..d).map(|c| inst.design[i * d + c] * b[c]).sum();
            resid[i] = inst.y[i] - pred;
        }
        for g in grad.iter_mut() {
            *g = 0.0;
        }
        for i in 0..n {
            for c in 0..d {
                grad[c] -= 2.0 / n as f64 * resid[i] * inst.design[i * d + c];
            }
        }
        let mut max_move: f64 = 0.0;
        for (j, &(lo, hi)) in inst.groups.iter().enumerate() {
            let mut norm_sq = 0.0;
            let mut tmp = Vec::with_capacity(hi - lo);
            for c in lo..hi {
                let v = b[c] - step * grad[c];
                norm_sq += v * v;
                tmp.push(v);
            }
            let norm = norm_sq.sqrt();
            let threshold = 2.0 * step * lambda[j];
            let factor = if norm > threshold { 1.0 - threshold / norm } else { 0.0 };
            for (c, v) in (lo..hi).zip(tmp) {
                let new = factor * v;
                max_move = max_move.max((new - b[c]).abs());
                b[c] = new;
            }
        }
        if max_move <= 1e-14 {
            break;
        }
    }
    b
}

/// Dense direct solve of the support-restricted ridge system
/// `(Gamma_J + rho I) beta = Delta` in weighted coordinates.
pub fn direct_ridge_solve(
    data: &Dataset<f64>,
    support: &BTreeSet<usize>,
    rho: f64,
) -> Coefficient<f64> {
    let n = data.n();
    let sup: Vec<usize> = support.iter().copied().collect();
    let lens: Vec<usize> = sup.iter().map(|&j| data.space().block(j).len()).collect();
    let total: usize = lens.iter().sum();
    let mut sqrt_w = Vec::with_capacity(total);
    for &j in &sup {
        sqrt_w.extend(data.space().block(j).weights().iter().map(|w| w.sqrt()));
    }
    let mut xs = nalgebra::DMatrix::<f64>::zeros(n, total);
    let mut col0 = 0;
    for (&j, &len) in sup.iter().zip(&lens) {
        let mat = data.block_matrix(j);
        for g in 0..len {
            for i in 0..n {
                xs[(i, col0 + g)] = mat[g * n + i] * sqrt_w[col0 + g];
            }
        }
        col0 += len;
    }
    let gram =
        xs.transpose() * &xs / n as f64 + nalgebra::DMatrix::identity(total, total) * rho;
    let yv = nalgebra::DVector::from_column_slice(data.y());
    let rhs = xs.transpose() * yv / n as f64;
    let sol = gram.cholesky().expect("spd system").solve(&rhs);
    let mut beta = Coefficient::zeros(data.space());
    let mut col0 = 0;
    for (&j, &len) in sup.iter().zip(&lens) {
        let vals = beta.block_mut(j).values_mut();
        for g in 0..len {
            vals[g] = sol[col0 + g] / sqrt_w[col0 + g];
        }
        col0 += len;
    }
    beta
}

/// Random mixed-block dataset (curve + vector + scalars) for structural
/// checks.
pub fn random_mixed_dataset(n: usize, grid: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid_pts: Vec<f64> = (0..grid).map(|k| k as f64 / (grid - 1) as f64).collect();
    let space = SpaceSpec::new(vec![
        BlockSpec::curve(grid_pts.clone()).unwrap(),
        BlockSpec::vector(3).unwrap(),
        BlockSpec::scalar(),
        BlockSpec::scalar(),
    ]);
    let arcs: Vec<_> = (0..4).map(|j| Arc::new(space.block(j).clone())).collect();
    let rows: Vec<Vec<BlockElement<f64>>> = (0..n)
        .map(|_| {
            let amp: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            let phase: f64 = rng.gen::<f64>() * 3.0;
            let curve: Vec<f64> = grid_pts
                .iter()
                .map(|t| amp * (5.0 * t + phase).sin() + 0.2 * (rng.gen::<f64>() - 0.5))
                .collect();
            vec![
                BlockElement::new(Arc::clone(&arcs[0]), curve).unwrap(),
                BlockElement::new(
                    Arc::clone(&arcs[1]),
                    (0..3).map(|_| rng.gen::<f64>() - 0.5).collect(),
                )
                .unwrap(),
                BlockElement::new(Arc::clone(&arcs[2]), vec![rng.gen::<f64>() - 0.5]).unwrap(),
                BlockElement::new(Arc::clone(&arcs[3]), vec![rng.gen::<f64>() - 0.5]).unwrap(),
            ]
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let c0 = rows[i][0].values()[0];
            let v0 = rows[i][1].values()[0];
            2.0 * c0 - v0 + 0.05 * (rng.gen::<f64>() - 0.5)
        })
        .collect();
    Dataset::from_rows(space, rows, y).unwrap()
}
