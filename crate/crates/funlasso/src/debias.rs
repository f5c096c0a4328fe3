//! Ridge refit restricted to the selected blocks, removing the shrinkage
//! bias of the group penalty.
//!
//! The criterion `(1/n) sum_i (Y_i - <beta, X_i>)^2 + rho ||beta||^2` over
//! coefficients supported on the selected blocks is minimized by gradient
//! descent with step `alpha_k = alpha_1 / k`. The first step size is set to
//! `1 / (2 (rho + sum_j N_j))`, which is below the inverse Lipschitz
//! constant of the gradient, so the objective never increases. The direct
//! linear-solve solution exists in closed form and serves as the test
//! oracle for this solver.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{weighted_dot, Coefficient, Dataset};
use crate::scalar::Scalar;
use crate::selection::fold_bounds;
use crate::solver::mean_square_norms;

/// Stopping controls for the ridge gradient descent.
#[derive(Clone, Debug)]
pub struct DebiasOptions<T> {
    /// Gradient-norm tolerance; defaults to `1e-8 * (1 + ||Delta||)`.
    pub grad_tol: Option<T>,
    pub max_steps: usize,
}

impl<T: Scalar> Default for DebiasOptions<T> {
    fn default() -> Self {
        Self { grad_tol: None, max_steps: 100_000 }
    }
}

/// Outcome of a ridge refit.
#[derive(Clone, Debug)]
pub struct DebiasResult<T> {
    /// Refit coefficient; zero outside the input support.
    pub beta_tilde: Coefficient<T>,
    pub rho: T,
    pub n_steps: usize,
    /// Gradient norm at exit.
    pub gradient_norm: T,
    /// Initial step size.
    pub alpha1: T,
}

/// Ridge objective `(1/n) sum (Y - <beta, X>)^2 + rho ||beta||^2`.
pub fn ridge_objective<T: Scalar>(data: &Dataset<T>, beta: &Coefficient<T>, rho: T) -> Result<T> {
    let pred = data.predict(beta)?;
    let inv_n = T::one() / T::from_count(data.n());
    let rss: T = data
        .y()
        .iter()
        .zip(&pred)
        .map(|(&y, &p)| (y - p) * (y - p))
        .sum();
    Ok(rss * inv_n + rho * beta.norm_sq())
}

struct RidgeProblem<'a, T> {
    data: &'a Dataset<T>,
    support: Vec<usize>,
    /// Per-support-block correlation of the response.
    delta: Vec<Vec<T>>,
    rho: T,
}

impl<'a, T: Scalar> RidgeProblem<'a, T> {
    fn new(data: &'a Dataset<T>, support: &BTreeSet<usize>, rho: T) -> Self {
        let n = data.n();
        let inv_n = T::one() / T::from_count(n);
        let support: Vec<usize> = support.iter().copied().collect();
        let delta = support
            .iter()
            .map(|&j| {
                let len = data.space().block(j).len();
                let mat = data.block_matrix(j);
                let mut out = vec![T::zero(); len];
                for (g, o) in out.iter_mut().enumerate() {
                    let col = &mat[g * n..(g + 1) * n];
                    let mut acc = T::zero();
                    for (&yv, &x) in data.y().iter().zip(col) {
                        acc = acc + yv * x;
                    }
                    *o = acc * inv_n;
                }
                out
            })
            .collect();
        Self { data, support, delta, rho }
    }

    fn delta_norm(&self) -> T {
        let mut acc = T::zero();
        for (b, &j) in self.delta.iter().zip(&self.support) {
            let w = self.data.space().block(j).weights();
            acc = acc + weighted_dot(b, b, w);
        }
        acc.sqrt()
    }

    /// Gradient `-2 Delta + 2 (Gamma_J + rho I) beta` into `grad`;
    /// returns its norm.
    fn gradient(&self, beta: &[Vec<T>], grad: &mut [Vec<T>]) -> T {
        let n = self.data.n();
        let inv_n = T::one() / T::from_count(n);
        let two = T::from_f64_lossy(2.0);

        // t_i = <beta, X_i> over the support blocks.
        let mut t = vec![T::zero(); n];
        for (b, &j) in beta.iter().zip(&self.support) {
            let w = self.data.space().block(j).weights();
            let mat = self.data.block_matrix(j);
            for (g, (&bv, &wv)) in b.iter().zip(w).enumerate() {
                let c = bv * wv;
                if c == T::zero() {
                    continue;
                }
                let col = &mat[g * n..(g + 1) * n];
                for (ti, &x) in t.iter_mut().zip(col) {
                    *ti = *ti + c * x;
                }
            }
        }

        let mut norm_sq = T::zero();
        for (((g_block, b), d), &j) in
            grad.iter_mut().zip(beta).zip(&self.delta).zip(&self.support)
        {
            let w = self.data.space().block(j).weights();
            let mat = self.data.block_matrix(j);
            for (g, gv) in g_block.iter_mut().enumerate() {
                let col = &mat[g * n..(g + 1) * n];
                let mut acc = T::zero();
                for (&ti, &x) in t.iter().zip(col) {
                    acc = acc + ti * x;
                }
                let gamma_beta = acc * inv_n;
                *gv = two * (gamma_beta + self.rho * b[g] - d[g]);
            }
            norm_sq = norm_sq + weighted_dot(g_block, g_block, w);
        }
        norm_sq.sqrt()
    }
}

fn tikhonov_impl<T: Scalar>(
    data: &Dataset<T>,
    support: &BTreeSet<usize>,
    rho: T,
    init: &Coefficient<T>,
    opts: &DebiasOptions<T>,
    mut trace: Option<&mut Vec<T>>,
) -> Result<DebiasResult<T>> {
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho}")));
    }
    if !init.conforms_to(data.space()) {
        return Err(Error::SpecMismatch("tikhonov init".into()));
    }
    for (j, b) in init.blocks().iter().enumerate() {
        if !support.contains(&j) && !b.is_zero() {
            return Err(Error::InvalidParameter(format!(
                "init has mass on block {j} outside the support"
            )));
        }
    }
    if support.is_empty() {
        return Ok(DebiasResult {
            beta_tilde: Coefficient::zeros(data.space()),
            rho,
            n_steps: 0,
            gradient_norm: T::zero(),
            alpha1: T::one() / (T::from_f64_lossy(2.0) * rho),
        });
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= data.n_blocks()) {
        return Err(Error::InvalidParameter(format!("support block {bad} out of range")));
    }

    let problem = RidgeProblem::new(data, support, rho);
    let n_weights = mean_square_norms(data);
    let curv_sum: T = problem.support.iter().map(|&j| n_weights[j]).sum();
    let alpha1 = T::one() / (T::from_f64_lossy(2.0) * (rho + curv_sum));
    let grad_tol = opts
        .grad_tol
        .unwrap_or_else(|| T::from_f64_lossy(1e-8) * (T::one() + problem.delta_norm()));

    let mut beta: Vec<Vec<T>> = problem
        .support
        .iter()
        .map(|&j| init.block(j).values().to_vec())
        .collect();
    let mut grad: Vec<Vec<T>> = beta.iter().map(|b| vec![T::zero(); b.len()]).collect();

    let mut n_steps = 0;
    let mut gradient_norm = problem.gradient(&beta, &mut grad);
    for k in 1..=opts.max_steps {
        if gradient_norm <= grad_tol {
            break;
        }
        if !gradient_norm.is_finite() {
            return Err(Error::Numeric("non-finite ridge gradient".into()));
        }
        let step = alpha1 / T::from_count(k);
        for (b, g) in beta.iter_mut().zip(&grad) {
            for (bv, &gv) in b.iter_mut().zip(g) {
                *bv = *bv - step * gv;
            }
        }
        n_steps = k;
        gradient_norm = problem.gradient(&beta, &mut grad);
        if let Some(tr) = trace.as_deref_mut() {
            let mut full = Coefficient::zeros(data.space());
            for (b, &j) in beta.iter().zip(&problem.support) {
                full.block_mut(j).values_mut().copy_from_slice(b);
            }
            tr.push(ridge_objective(data, &full, rho)?);
        }
    }

    let mut beta_tilde = Coefficient::zeros(data.space());
    for (b, &j) in beta.iter().zip(&problem.support) {
        beta_tilde.block_mut(j).values_mut().copy_from_slice(b);
    }
    Ok(DebiasResult { beta_tilde, rho, n_steps, gradient_norm, alpha1 })
}

/// Ridge refit on the given support by harmonic-step gradient descent,
/// started from `init` (typically the penalized fit).
pub fn tikhonov_fit<T: Scalar>(
    data: &Dataset<T>,
    support: &BTreeSet<usize>,
    rho: T,
    init: &Coefficient<T>,
    opts: &DebiasOptions<T>,
) -> Result<DebiasResult<T>> {
    tikhonov_impl(data, support, rho, init, opts, None)
}

/// `tikhonov_fit` recording the ridge objective after every step.
pub fn tikhonov_fit_with_trace<T: Scalar>(
    data: &Dataset<T>,
    support: &BTreeSet<usize>,
    rho: T,
    init: &Coefficient<T>,
    opts: &DebiasOptions<T>,
) -> Result<(DebiasResult<T>, Vec<T>)> {
    let mut trace = Vec::new();
    let result = tikhonov_impl(data, support, rho, init, opts, Some(&mut trace))?;
    Ok((result, trace))
}

/// Default grid for the ridge parameter: 20 log-spaced points in
/// `[1e-6, 10]`.
pub fn default_rho_grid<T: Scalar>() -> Vec<T> {
    let lo = 1e-6f64.ln();
    let hi = 10f64.ln();
    (0..20)
        .map(|k| T::from_f64_lossy((lo + (hi - lo) * k as f64 / 19.0).exp()))
        .collect()
}

/// V-fold cross-validation of the ridge parameter over `rho_grid`;
/// ties pick the larger value. An empty support returns the grid maximum
/// (the fit is zero regardless of rho).
pub fn select_rho_cv<T: Scalar>(
    data: &Dataset<T>,
    support: &BTreeSet<usize>,
    rho_grid: &[T],
    folds: usize,
    init: &Coefficient<T>,
    opts: &DebiasOptions<T>,
) -> Result<T> {
    Ok(select_rho_cv_scored(data, support, rho_grid, folds, init, opts)?.0)
}

pub(crate) fn select_rho_cv_scored<T: Scalar>(
    data: &Dataset<T>,
    support: &BTreeSet<usize>,
    rho_grid: &[T],
    folds: usize,
    init: &Coefficient<T>,
    opts: &DebiasOptions<T>,
) -> Result<(T, Vec<(T, T)>)> {
    if rho_grid.is_empty() {
        return Err(Error::InvalidParameter("empty rho grid".into()));
    }
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!(
            "folds must be in 2..=n, got {folds} (n = {n})"
        )));
    }
    let mut grid: Vec<T> = rho_grid.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if support.is_empty() {
        return Ok((grid[0], grid.iter().map(|&r| (r, T::zero())).collect()));
    }

    let fold_errors: Vec<Result<Vec<T>>> = (0..folds)
        .into_par_iter()
        .map(|v| {
            let (lo, hi) = fold_bounds(n, v, folds);
            let train_idx: Vec<usize> = (0..lo).chain(hi..n).collect();
            let train = data.subset(&train_idx)?;
            let mut errs = Vec::with_capacity(grid.len());
            for &rho in &grid {
                let fit = tikhonov_fit(&train, support, rho, init, opts)?;
                let mut sum = T::zero();
                for i in lo..hi {
                    let pred = data.predict_row(&fit.beta_tilde, i)?;
                    let d = data.y()[i] - pred;
                    sum = sum + d * d;
                }
                errs.push(sum);
            }
            Ok(errs)
        })
        .collect();

    let inv_n = T::one() / T::from_count(n);
    let mut scores = vec![T::zero(); grid.len()];
    for fold in fold_errors {
        for (s, e) in scores.iter_mut().zip(fold?) {
            *s = *s + e * inv_n;
        }
    }
    // Grid sorted decreasing: strict improvement keeps the larger rho on
    // ties.
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = k;
        }
    }
    Ok((grid[best], grid.into_iter().zip(scores).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{BlockElement, BlockSpec, SpaceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn multi_scalar_dataset(cols: &[Vec<f64>], y: &[f64]) -> Dataset<f64> {
        let p = cols.len();
        let space = SpaceSpec::new((0..p).map(|_| BlockSpec::scalar()).collect());
        let n = y.len();
        let rows = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| BlockElement::new(space.block_arc(j), vec![cols[j][i]]).unwrap())
                    .collect()
            })
            .collect();
        Dataset::from_rows(space, rows, y.to_vec()).unwrap()
    }

    /// Direct solve of (Gamma_J + rho I) beta = Delta in stacked weighted
    /// coordinates, via an external dense solver.
    fn direct_solve(
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
        // Rows of the stacked design, scaled by sqrt weights.
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
        let gram = xs.transpose() * &xs / n as f64
            + nalgebra::DMatrix::identity(total, total) * rho;
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

    #[test]
    fn zero_response_is_stationary_at_origin() {
        let cols = vec![vec![1.0, -1.0, 0.5]];
        let d = multi_scalar_dataset(&cols, &[0.0; 3]);
        let support: BTreeSet<usize> = [0].into_iter().collect();
        let res = tikhonov_fit(
            &d,
            &support,
            0.5,
            &Coefficient::zeros(d.space()),
            &DebiasOptions::default(),
        )
        .unwrap();
        close(res.gradient_norm, 0.0, 0.0);
        assert_eq!(res.n_steps, 0);
        assert!(res.beta_tilde.block(0).is_zero());
    }

    #[test]
    fn one_dimensional_ridge_by_hand() {
        // X = (1, -1), Y = (1, -1): solution 1 / (1 + rho).
        let d = multi_scalar_dataset(&[vec![1.0, -1.0]], &[1.0, -1.0]);
        let support: BTreeSet<usize> = [0].into_iter().collect();
        for rho in [0.3, 1.0, 5.0] {
            let res = tikhonov_fit(
                &d,
                &support,
                rho,
                &Coefficient::zeros(d.space()),
                &DebiasOptions::default(),
            )
            .unwrap();
            close(res.beta_tilde.block(0).values()[0], 1.0 / (1.0 + rho), 1e-4);
            close(res.alpha1, 1.0 / (2.0 * (rho + 1.0)), 1e-15);
        }
    }

    #[test]
    fn gradient_descent_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 25;
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()).collect();
        let y: Vec<f64> =
            (0..n).map(|i| cols[0][i] - 0.5 * cols[2][i] + 0.02 * rng.gen::<f64>()).collect();
        let d = multi_scalar_dataset(&cols, &y);
        let support: BTreeSet<usize> = [0, 2].into_iter().collect();
        // Harmonic steps contract like k^(-(rho + mu_min)/(rho + sum N_j));
        // rho of the order of sum N_j keeps that exponent near one.
        let rho = 3.0;
        let res = tikhonov_fit(
            &d,
            &support,
            rho,
            &Coefficient::zeros(d.space()),
            &DebiasOptions::default(),
        )
        .unwrap();
        let direct = direct_solve(&d, &support, rho);
        let mut diff = res.beta_tilde.clone();
        diff.add_scaled(-1.0, &direct).unwrap();
        assert!(diff.norm() <= 1e-4, "distance to direct solve {}", diff.norm());
        assert!(res.beta_tilde.block(1).is_zero());
    }

    #[test]
    fn direct_solution_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 15;
        let cols: Vec<Vec<f64>> =
            (0..2).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.7 * cols[1][i] + 0.1).collect();
        let d = multi_scalar_dataset(&cols, &y);
        let support: BTreeSet<usize> = [0, 1].into_iter().collect();
        let rho = 1.3;
        let direct = direct_solve(&d, &support, rho);
        let res = tikhonov_fit(
            &d,
            &support,
            rho,
            &direct,
            &DebiasOptions { max_steps: 50, ..DebiasOptions::default() },
        )
        .unwrap();
        let mut diff = res.beta_tilde;
        diff.add_scaled(-1.0, &direct).unwrap();
        assert!(diff.norm() <= 1e-12, "iterate moved {}", diff.norm());
    }

    #[test]
    fn ridge_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 20;
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * cols[0][i] - cols[1][i]).collect();
        let d = multi_scalar_dataset(&cols, &y);
        let support: BTreeSet<usize> = [0, 1, 2].into_iter().collect();
        let (_, trace) = tikhonov_fit_with_trace(
            &d,
            &support,
            0.05,
            &Coefficient::zeros(d.space()),
            &DebiasOptions { max_steps: 500, ..DebiasOptions::default() },
        )
        .unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "ridge objective increased");
        }
    }

    #[test]
    fn parameter_validation() {
        let d = multi_scalar_dataset(&[vec![1.0, -1.0]], &[1.0, -1.0]);
        let support: BTreeSet<usize> = [0].into_iter().collect();
        let zero = Coefficient::zeros(d.space());
        assert!(tikhonov_fit(&d, &support, 0.0, &zero, &DebiasOptions::default()).is_err());
        assert!(tikhonov_fit(&d, &support, -1.0, &zero, &DebiasOptions::default()).is_err());

        // Init with mass outside the support is rejected.
        let mut bad = zero.clone();
        bad.block_mut(0).values_mut()[0] = 1.0;
        let empty: BTreeSet<usize> = BTreeSet::new();
        assert!(tikhonov_fit(&d, &empty, 1.0, &bad, &DebiasOptions::default()).is_err());

        // Empty support with zero init returns the zero coefficient.
        let res = tikhonov_fit(&d, &empty, 1.0, &zero, &DebiasOptions::default()).unwrap();
        assert_eq!(res.n_steps, 0);
        assert!(res.beta_tilde.block(0).is_zero());
    }

    #[test]
    fn rho_selection_prefers_small_rho_on_noiseless_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 40;
        let cols: Vec<Vec<f64>> =
            (0..2).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.2 * cols[0][i] - 0.4 * cols[1][i]).collect();
        let d = multi_scalar_dataset(&cols, &y);
        let support: BTreeSet<usize> = [0, 1].into_iter().collect();
        let grid = vec![1e-4, 1e-2, 1.0];
        let init = Coefficient::zeros(d.space());
        let (rho, scores) =
            select_rho_cv_scored(&d, &support, &grid, 4, &init, &DebiasOptions::default())
                .unwrap();
        close(rho, 1e-4, 0.0);
        for (_, s) in &scores {
            assert!(s.is_finite() && *s >= 0.0);
        }

        // Oracle: held-out error of the direct solves across the grid picks
        // the same winner.
        let mut best = (f64::INFINITY, 0.0);
        for &cand in &grid {
            let mut err = 0.0;
            for v in 0..4 {
                let (lo, hi) = fold_bounds(n, v, 4);
                let train_idx: Vec<usize> = (0..lo).chain(hi..n).collect();
                let train = d.subset(&train_idx).unwrap();
                let beta = direct_solve(&train, &support, cand);
                for i in lo..hi {
                    let p = d.predict_row(&beta, i).unwrap();
                    err += (d.y()[i] - p) * (d.y()[i] - p);
                }
            }
            if err < best.0 {
                best = (err, cand);
            }
        }
        close(best.1, rho, 0.0);

        // Single-element grid returns that element.
        let (only, _) =
            select_rho_cv_scored(&d, &support, &[0.37], 4, &init, &DebiasOptions::default())
                .unwrap();
        close(only, 0.37, 0.0);

        // Empty support returns the grid maximum.
        let empty: BTreeSet<usize> = BTreeSet::new();
        let rho_empty =
            select_rho_cv(&d, &empty, &grid, 4, &init, &DebiasOptions::default()).unwrap();
        close(rho_empty, 1.0, 0.0);
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_rho_grid::<f64>();
        assert_eq!(grid.len(), 20);
        close(grid[0], 1e-6, 1e-18);
        close(grid[19], 10.0, 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
