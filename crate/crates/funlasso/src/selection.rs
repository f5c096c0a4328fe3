//! Tuning-parameter selection: projected-estimator dimension, noise
//! variance, and the penalty scale `r` (cross-validation, noise-variance
//! plug-in, BIC).

use rayon::prelude::*;

use crate::covariance::{self, PcaBasis};
use crate::error::{Error, Result};
use crate::hilbert::Dataset;
use crate::scalar::Scalar;
use crate::solver::{self, PathResult, PenaltyWeights, SolverOptions};

/// Default penalty constant of the dimension-selection criterion.
pub const DEFAULT_KAPPA: f64 = 2.0;

/// Default significance level of the plug-in rule.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Default number of cross-validation folds.
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMethod {
    Cv,
    SigmaHat,
    Bic,
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectionMethod::Cv => write!(f, "cv"),
            SelectionMethod::SigmaHat => write!(f, "sigma"),
            SelectionMethod::Bic => write!(f, "bic"),
        }
    }
}

/// Outcome of one `r`-selection rule.
#[derive(Clone, Debug)]
pub struct SelectionReport<T> {
    pub method: SelectionMethod,
    pub chosen_r: T,
    /// Per-candidate `(r, score)` rows (single formula row for the plug-in).
    pub score_table: Vec<(T, T)>,
    pub sigma_hat2: Option<T>,
    /// Dimension of the projected estimator, when one was selected.
    pub chosen_m: Option<usize>,
    /// Penalty constant used by dimension selection.
    pub kappa_pen: T,
}

impl<T: Scalar> SelectionReport<T> {
    /// Attach a selected projection dimension to the report.
    pub fn with_dimension(mut self, m: usize, kappa_pen: T) -> Self {
        self.chosen_m = Some(m);
        self.kappa_pen = kappa_pen;
        self
    }
}

/// Selected projection dimension together with the scored candidates.
#[derive(Clone, Debug)]
pub struct DimensionSelection<T> {
    pub chosen_m: usize,
    /// `(m, score)` rows for every candidate dimension.
    pub scores: Vec<(usize, T)>,
}

/// Mean squared residual of `beta` on `data`.
fn mean_rss<T: Scalar>(data: &Dataset<T>, beta: &crate::hilbert::Coefficient<T>) -> Result<T> {
    let pred = data.predict(beta)?;
    let n = data.n();
    let inv_n = T::one() / T::from_count(n);
    Ok(data
        .y()
        .iter()
        .zip(&pred)
        .map(|(&y, &p)| (y - p) * (y - p))
        .sum::<T>()
        * inv_n)
}

/// Largest dimension whose merged empirical eigenvalue stays above
/// `sqrt(ln^3(n) / n)`, capped at `n`.
///
/// The theoretical cap uses population eigenvalues, which are unobservable;
/// empirical ones are substituted.
pub fn spectral_dimension_cap<T: Scalar>(basis: &PcaBasis<T>, n: usize) -> usize {
    let ln_n = T::from_count(n).ln();
    let threshold = (ln_n * ln_n * ln_n / T::from_count(n)).sqrt();
    basis
        .merged_eigenvalues()
        .iter()
        .take(n)
        .take_while(|&&mu| mu >= threshold)
        .count()
}

/// Select the projection dimension by penalized empirical risk:
/// `RSS/n + kappa * sigma2 * m * ln(n) / n`, smallest minimizer wins.
///
/// Candidates run over `1..=min(n, M)` with `M` the largest numerically
/// nonsingular restriction. The eigenvalue-threshold cap of
/// [`spectral_dimension_cap`] is deliberately not applied here: it compares
/// raw eigenvalues against an absolute threshold, so with covariate blocks
/// on wildly different scales it can exclude every direction of a relevant
/// low-variance block; the complexity penalty already bounds the chosen
/// dimension.
pub fn select_dimension<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    weights: &PenaltyWeights<T>,
    kappa_pen: T,
    sigma2: T,
    opts: &SolverOptions<T>,
) -> Result<DimensionSelection<T>> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidParameter("sigma2 must be > 0".into()));
    }
    if !(kappa_pen > T::zero()) {
        return Err(Error::InvalidParameter("kappa_pen must be > 0".into()));
    }
    let n = data.n();
    let tol_rank = T::from_f64_lossy(covariance::DEFAULT_TOL_RANK);
    let cap = covariance::max_dimension_capped(data, basis, tol_rank, n)?;
    if cap == 0 {
        return Err(Error::DegenerateDesign(
            "no usable projection dimension (singular restriction)".into(),
        ));
    }

    let scores_mat = covariance::scores(data, basis, cap)?;
    let penalty_unit = kappa_pen * sigma2 * T::from_count(n).ln() / T::from_count(n);

    let mut rows = Vec::with_capacity(cap);
    let mut best: Option<(usize, T)> = None;
    let mut warm: Option<crate::hilbert::Coefficient<T>> = None;
    for m in 1..=cap {
        let fit = solver::gpd_fit_projected_with_scores(
            data,
            basis,
            &scores_mat,
            m,
            weights,
            opts,
            warm.as_ref(),
        )?;
        let rss = mean_rss(data, &fit.beta)?;
        let score = rss + penalty_unit * T::from_count(m);
        rows.push((m, score));
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((m, score));
        }
        warm = Some(fit.beta);
    }
    let (chosen_m, _) = best.expect("cap >= 1");
    Ok(DimensionSelection { chosen_m, scores: rows })
}

/// Noise-variance estimate: mean squared residual of the fit at the
/// smallest converged grid value of a path.
pub fn estimate_noise_variance<T: Scalar>(
    path: &PathResult<T>,
    data: &Dataset<T>,
) -> Result<T> {
    let fit = path
        .feasible_fit()
        .ok_or_else(|| Error::Selection("no converged fit on the path".into()))?;
    mean_rss(data, &fit.beta)
}

/// The plug-in formula `4 sqrt(2) sigma sqrt(q ln(p) / n)` with
/// `q = 1 - ln(alpha)/ln(p)`.
pub fn sigma_rule_r<T: Scalar>(sigma2: T, p: usize, n: usize, alpha: T) -> Result<T> {
    if p < 2 {
        return Err(Error::InvalidParameter(
            "plug-in rule needs p >= 2 (ln p = 0 otherwise)".into(),
        ));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter("alpha must be in (0, 1)".into()));
    }
    if !(sigma2 >= T::zero()) {
        return Err(Error::InvalidParameter("sigma2 must be >= 0".into()));
    }
    let ln_p = T::from_count(p).ln();
    let q = T::one() - alpha.ln() / ln_p;
    let four_sqrt2 = T::from_f64_lossy(4.0) * T::from_f64_lossy(2.0).sqrt();
    Ok(four_sqrt2 * sigma2.sqrt() * (q * ln_p / T::from_count(n)).sqrt())
}

/// Noise-variance plug-in selection of `r`, snapped up to the nearest grid
/// value so the refit can reuse the path's warm starts.
pub fn select_r_sigma<T: Scalar>(
    data: &Dataset<T>,
    path: &PathResult<T>,
    alpha: T,
) -> Result<SelectionReport<T>> {
    select_r_sigma_with(data, path, alpha, true)
}

/// Plug-in selection; `snap = false` keeps the exact formula value instead
/// of snapping to the grid.
pub fn select_r_sigma_with<T: Scalar>(
    data: &Dataset<T>,
    path: &PathResult<T>,
    alpha: T,
    snap: bool,
) -> Result<SelectionReport<T>> {
    let sigma2 = estimate_noise_variance(path, data)?;
    let r_hat = sigma_rule_r(sigma2, data.n_blocks(), data.n(), alpha)?;
    let chosen_r = if snap {
        // Grid is decreasing; pick the smallest grid value >= r_hat.
        path.grid
            .iter()
            .rev()
            .find(|&&r| r >= r_hat)
            .copied()
            .unwrap_or(path.grid[0])
    } else {
        r_hat
    };
    Ok(SelectionReport {
        method: SelectionMethod::SigmaHat,
        chosen_r,
        score_table: vec![(r_hat, sigma2)],
        sigma_hat2: Some(sigma2),
        chosen_m: None,
        kappa_pen: T::from_f64_lossy(DEFAULT_KAPPA),
    })
}

/// 0-based bounds of fold `v` among `folds` contiguous-index folds.
pub(crate) fn fold_bounds(n: usize, v: usize, folds: usize) -> (usize, usize) {
    (v * n / folds, (v + 1) * n / folds)
}

/// V-fold cross-validation over a decreasing grid of penalty scales.
///
/// Folds are contiguous index ranges; each fold's fits are warm-started
/// along the grid. Ties pick the larger `r`.
pub fn select_r_cv<T: Scalar>(
    data: &Dataset<T>,
    grid: &[T],
    folds: usize,
    opts: &SolverOptions<T>,
) -> Result<SelectionReport<T>> {
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!(
            "folds must be in 2..=n, got {folds} (n = {n})"
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("grid must be decreasing".into()));
    }
    let max_fold = (0..folds)
        .map(|v| {
            let (lo, hi) = fold_bounds(n, v, folds);
            hi - lo
        })
        .max()
        .unwrap_or(0);
    if n - max_fold < 2 {
        return Err(Error::InvalidParameter("training folds need at least 2 rows".into()));
    }

    // Per-fold vectors of held-out squared-error sums, one entry per grid
    // value; reduced in fold order so the result is evaluation-order free.
    let fold_errors: Vec<Result<Vec<T>>> = (0..folds)
        .into_par_iter()
        .map(|v| {
            let (lo, hi) = fold_bounds(n, v, folds);
            let train_idx: Vec<usize> = (0..lo).chain(hi..n).collect();
            let train = data.subset(&train_idx)?;
            let mut solver_opts = opts.clone();
            if solver_opts.kkt_tol.is_none() {
                solver_opts.kkt_tol = solver::r_max(&train)
                    .ok()
                    .map(|r| T::from_f64_lossy(1e-6) * r);
            }
            let mut warm = crate::hilbert::Coefficient::zeros(train.space());
            let mut errs = Vec::with_capacity(grid.len());
            for &r in grid {
                let weights = solver::penalty_weights(&train, r)?;
                let fit = solver::gpd_fit(&train, &weights, &warm, &solver_opts)?;
                warm = fit.beta.clone();
                let mut sum = T::zero();
                for i in lo..hi {
                    let pred = data.predict_row(&fit.beta, i)?;
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

    // Grid is decreasing, so scanning in order with strict improvement
    // breaks ties toward larger r.
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = k;
        }
    }
    Ok(SelectionReport {
        method: SelectionMethod::Cv,
        chosen_r: grid[best],
        score_table: grid.iter().copied().zip(scores).collect(),
        sigma_hat2: None,
        chosen_m: None,
        kappa_pen: T::from_f64_lossy(DEFAULT_KAPPA),
    })
}

/// BIC score: `ln(sigma_r^2) + |J| ln(n) / n`, with the variance floored
/// at 1e-12 before the logarithm.
pub fn bic_score<T: Scalar>(sigma_r2: T, support_size: usize, n: usize) -> T {
    let floored = sigma_r2.max(T::from_f64_lossy(1e-12));
    floored.ln() + T::from_count(support_size) * T::from_count(n).ln() / T::from_count(n)
}

/// BIC selection of `r` over the converged grid points of a path; ties
/// pick the larger `r`.
pub fn select_r_bic<T: Scalar>(data: &Dataset<T>, path: &PathResult<T>) -> Result<SelectionReport<T>> {
    if path.grid.is_empty() {
        return Err(Error::InvalidParameter("empty path".into()));
    }
    let n = data.n();
    let mut table = Vec::new();
    let mut best: Option<(T, T)> = None;
    for (k, fit) in path.fits.iter().enumerate() {
        if !fit.converged {
            continue;
        }
        let rss = mean_rss(data, &fit.beta)?;
        let score = bic_score(rss, fit.support.len(), n);
        table.push((path.grid[k], score));
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((path.grid[k], score));
        }
    }
    let (chosen_r, _) =
        best.ok_or_else(|| Error::Selection("no converged fit on the path".into()))?;
    Ok(SelectionReport {
        method: SelectionMethod::Bic,
        chosen_r,
        score_table: table,
        sigma_hat2: None,
        chosen_m: None,
        kappa_pen: T::from_f64_lossy(DEFAULT_KAPPA),
    })
}
