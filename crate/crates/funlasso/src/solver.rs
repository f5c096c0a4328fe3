//! Group-penalized least squares by blockwise majorization descent.
//!
//! The criterion is `(1/n) sum_i (Y_i - <beta, X_i>)^2 + 2 sum_j lambda_j
//! ||beta_j||_j`. Each block update minimizes a quadratic upper bound of the
//! loss with curvature `N_j = (1/n) sum_i ||X_i^j||^2` (an upper bound on
//! the spectral radius of the block covariance operator), which has the
//! closed-form shrinkage solution
//!
//! `beta_j <- (beta_j + R_j / N_j) * (1 - lambda_j / ||N_j beta_j + R_j||)_+`
//!
//! with `R_j` the block correlation of the current residuals. Residuals are
//! maintained incrementally and refreshed periodically to cap drift.

use std::collections::BTreeSet;

use crate::covariance::{self, PcaBasis};
use crate::error::{Error, Result};
use crate::hilbert::{Coefficient, Dataset};
use crate::scalar::Scalar;

/// Full residual recomputation period (cycles), capping incremental drift.
const RECOMPUTE_EVERY: usize = 100;

/// Relative factor for the default KKT tolerance `1e-6 * r_max`.
const KKT_TOL_FACTOR: f64 = 1e-6;

/// Minimum spacing (cycles) between KKT evaluations inside the loop.
const KKT_CHECK_EVERY: usize = 10;

/// Window length (cycles) for the movement stall detector.
const STALL_WINDOW: usize = 50;

/// Safety margin on projected-completion bail-outs: iteration only stops
/// early when the extrapolated final value misses the target by this factor.
const STALL_MARGIN: f64 = 4.0;

/// Stopping controls for a single fit.
#[derive(Clone, Debug)]
pub struct SolverOptions<T> {
    /// Cycle convergence threshold on `max_j N_j ||delta beta_j||^2`.
    pub tol: T,
    /// Maximum number of full cycles over the blocks.
    pub max_iter: usize,
    /// KKT gap below which an iterate counts as converged; defaults to
    /// `1e-6 * r_max` of the dataset when `None`.
    pub kkt_tol: Option<T>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::from_f64_lossy(1e-8),
            max_iter: 10_000,
            kkt_tol: None,
        }
    }
}

/// Per-block penalty levels tied to one penalty scale `r`.
#[derive(Clone, Debug)]
pub struct PenaltyWeights<T> {
    r: T,
    lambda: Vec<T>,
    n_weights: Vec<T>,
}

impl<T: Scalar> PenaltyWeights<T> {
    pub fn r(&self) -> T {
        self.r
    }

    /// `lambda_j = r * sqrt(N_j)`.
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    /// `N_j = (1/n) sum_i ||X_i^j||^2`.
    pub fn n_weights(&self) -> &[T] {
        &self.n_weights
    }
}

/// Mean squared block norms `N_j` of a dataset.
pub(crate) fn mean_square_norms<T: Scalar>(data: &Dataset<T>) -> Vec<T> {
    let n = data.n();
    let inv_n = T::one() / T::from_count(n);
    (0..data.n_blocks())
        .map(|j| {
            let w = data.space().block(j).weights();
            let mat = data.block_matrix(j);
            let mut acc = T::zero();
            for (g, &wg) in w.iter().enumerate() {
                let col = &mat[g * n..(g + 1) * n];
                let mut s = T::zero();
                for &x in col {
                    s = s + x * x;
                }
                acc = acc + wg * s;
            }
            acc * inv_n
        })
        .collect()
}

/// Penalty levels for a given scale: `lambda_j = r * sqrt(N_j)`.
pub fn penalty_weights<T: Scalar>(data: &Dataset<T>, r: T) -> Result<PenaltyWeights<T>> {
    if !(r >= T::zero()) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("penalty scale r must be >= 0, got {r}")));
    }
    let n_weights = mean_square_norms(data);
    let lambda = n_weights.iter().map(|&nj| r * nj.sqrt()).collect();
    Ok(PenaltyWeights { r, lambda, n_weights })
}

/// Block correlations of a residual vector: `(1/n) sum_i resid_i X_i^j`
/// for one block, written into `out`.
fn block_correlation<T: Scalar>(mat: &[T], n: usize, resid: &[T], inv_n: T, out: &mut [T]) {
    for (g, o) in out.iter_mut().enumerate() {
        let col = &mat[g * n..(g + 1) * n];
        let mut acc = T::zero();
        for (&r, &x) in resid.iter().zip(col) {
            acc = acc + r * x;
        }
        *o = acc * inv_n;
    }
}

/// Smallest penalty scale at which the solution is exactly zero:
/// `max_j ||(1/n) sum_i Y_i X_i^j|| / sqrt(N_j)`, skipping zero blocks.
///
/// The returned value is nudged up by one part in 1e12 so that the zero
/// solution survives the rounding in reconstructing `lambda_j = r sqrt(N_j)`.
pub fn r_max<T: Scalar>(data: &Dataset<T>) -> Result<T> {
    let n = data.n();
    let inv_n = T::one() / T::from_count(n);
    let n_weights = mean_square_norms(data);
    if n_weights.iter().all(|&nj| nj == T::zero()) {
        return Err(Error::DegenerateDesign("all blocks are zero".into()));
    }
    let mut best = T::zero();
    for j in 0..data.n_blocks() {
        if n_weights[j] == T::zero() {
            continue;
        }
        let spec = data.space().block(j);
        let mut corr = vec![T::zero(); spec.len()];
        block_correlation(data.block_matrix(j), n, data.y(), inv_n, &mut corr);
        let norm = crate::hilbert::weighted_dot(&corr, &corr, spec.weights()).sqrt();
        best = best.max(norm / n_weights[j].sqrt());
    }
    Ok(best * (T::one() + T::from_f64_lossy(1e-12)))
}

/// Outcome of one solver run.
#[derive(Clone, Debug)]
pub struct FitResult<T> {
    /// Fitted coefficient.
    pub beta: Coefficient<T>,
    /// Blocks with strictly positive norm.
    pub support: BTreeSet<usize>,
    /// Value of the penalized criterion at `beta`.
    pub objective: T,
    /// Full cycles performed.
    pub n_iterations: usize,
    /// Whether the cycle criterion was met and the KKT gap is below
    /// tolerance.
    pub converged: bool,
    /// Maximum blockwise violation of the stationarity conditions.
    pub kkt_gap: T,
}

/// One block of the design as seen by the engine.
struct EngineBlock<'a, T> {
    mat: &'a [T],
    weights: &'a [T],
    lambda: T,
    curvature: T,
}

struct EngineExit<T> {
    cycles: usize,
    converged: bool,
    kkt_gap: T,
    /// Residuals at exit, freshly recomputed.
    resid: Vec<T>,
}

fn compute_residuals<T: Scalar>(y: &[T], blocks: &[EngineBlock<T>], beta: &[Vec<T>]) -> Vec<T> {
    let n = y.len();
    let mut resid = y.to_vec();
    for (b, coefs) in blocks.iter().zip(beta) {
        for (g, (&c, &w)) in coefs.iter().zip(b.weights).enumerate() {
            let cw = c * w;
            if cw == T::zero() {
                continue;
            }
            let col = &b.mat[g * n..(g + 1) * n];
            for (r, &x) in resid.iter_mut().zip(col) {
                *r = *r - cw * x;
            }
        }
    }
    resid
}

fn engine_objective<T: Scalar>(resid: &[T], blocks: &[EngineBlock<T>], beta: &[Vec<T>]) -> T {
    let n = resid.len();
    let inv_n = T::one() / T::from_count(n);
    let rss: T = resid.iter().map(|&r| r * r).sum();
    let two = T::from_f64_lossy(2.0);
    let mut pen = T::zero();
    for (b, coefs) in blocks.iter().zip(beta) {
        pen = pen + b.lambda * crate::hilbert::weighted_dot(coefs, coefs, b.weights).sqrt();
    }
    rss * inv_n + two * pen
}

/// Max blockwise KKT violation given exit residuals.
fn kkt_gap_from_residuals<T: Scalar>(
    resid: &[T],
    blocks: &[EngineBlock<T>],
    beta: &[Vec<T>],
) -> T {
    let n = resid.len();
    let inv_n = T::one() / T::from_count(n);
    let mut gap = T::zero();
    let mut corr: Vec<T> = Vec::new();
    for (b, coefs) in blocks.iter().zip(beta) {
        corr.resize(coefs.len(), T::zero());
        block_correlation(b.mat, n, resid, inv_n, &mut corr);
        let bnorm = crate::hilbert::weighted_dot(coefs, coefs, b.weights).sqrt();
        let g = if bnorm > T::zero() {
            // Active block: gradient must equal lambda * beta / ||beta||.
            let scale = b.lambda / bnorm;
            let mut acc = T::zero();
            for ((&c, &bv), &w) in corr.iter().zip(coefs).zip(b.weights) {
                let d = c - scale * bv;
                acc = acc + w * d * d;
            }
            acc.sqrt()
        } else {
            let norm = crate::hilbert::weighted_dot(&corr, &corr, b.weights).sqrt();
            (norm - b.lambda).max(T::zero())
        };
        gap = gap.max(g);
    }
    gap
}

/// True when extrapolating the current geometric improvement rate over the
/// remaining budget still misses `target` by more than the safety margin.
fn projected_miss<T: Scalar>(current: T, previous: T, span: usize, remaining: usize, target: T) -> bool {
    if current <= target {
        return false;
    }
    if current >= previous {
        // No improvement at all over the window.
        return true;
    }
    let rate_ln = (current / previous).ln() / T::from_count(span);
    let projected_ln = current.ln() + T::from_count(remaining) * rate_ln;
    projected_ln > (target * T::from_f64_lossy(STALL_MARGIN)).ln()
}

/// Core cyclic solver. `beta` is warm-start in, solution out.
///
/// Iteration stops when a full cycle moves every block by less than
/// `opts.tol` (in the `N_j ||delta||^2` metric) *and* the KKT gap is below
/// `kkt_tol`; it also stops at `opts.max_iter` cycles, or earlier when the
/// observed improvement rate provably cannot reach the tolerances within
/// the remaining budget (reported as non-converged either way).
fn gpd_engine<T: Scalar>(
    y: &[T],
    blocks: &[EngineBlock<T>],
    beta: &mut [Vec<T>],
    opts: &SolverOptions<T>,
    kkt_tol: T,
    mut trace: Option<&mut Vec<T>>,
) -> Result<EngineExit<T>> {
    let n = y.len();
    let inv_n = T::one() / T::from_count(n);
    let mut resid = compute_residuals(y, blocks, beta);
    let mut corr: Vec<T> = Vec::new();
    let mut delta: Vec<T> = Vec::new();

    let mut cycles = 0;
    let mut delta_converged = false;
    let mut kkt_converged = false;
    let mut last_kkt: Option<(usize, T)> = None;
    let mut window_min = T::infinity();
    let mut prev_window_min = T::infinity();
    while cycles < opts.max_iter {
        let mut max_delta = T::zero();
        for j in 0..blocks.len() {
            let b = &blocks[j];
            let coefs = &mut beta[j];
            let len = coefs.len();
            if b.curvature == T::zero() {
                // Zero block: predictions vanish, pin the coefficient.
                for v in coefs.iter_mut() {
                    *v = T::zero();
                }
                continue;
            }
            corr.resize(len, T::zero());
            delta.resize(len, T::zero());
            block_correlation(b.mat, n, &resid, inv_n, &mut corr);

            // u = N_j beta_j + R_j and its norm.
            let mut unorm_sq = T::zero();
            for ((u, &bv), &w) in corr.iter_mut().zip(coefs.iter()).zip(b.weights) {
                let uv = b.curvature * bv + *u;
                *u = uv;
                unorm_sq = unorm_sq + w * uv * uv;
            }
            let unorm = unorm_sq.sqrt();

            let mut delta_metric = T::zero();
            if unorm <= b.lambda || unorm == T::zero() {
                // Shrinkage clamps the whole block to zero.
                let mut all_zero = true;
                for (d, bv) in delta.iter_mut().zip(coefs.iter_mut()) {
                    *d = -*bv;
                    if *bv != T::zero() {
                        all_zero = false;
                    }
                    *bv = T::zero();
                }
                if !all_zero {
                    delta_metric = crate::hilbert::weighted_dot(&delta, &delta, b.weights);
                }
            } else {
                let factor = (T::one() - b.lambda / unorm) / b.curvature;
                for ((bv, d), u) in coefs.iter_mut().zip(delta.iter_mut()).zip(corr.iter()) {
                    let new = *u * factor;
                    *d = new - *bv;
                    *bv = new;
                }
                delta_metric = crate::hilbert::weighted_dot(&delta, &delta, b.weights);
            }

            if delta_metric > T::zero() {
                max_delta = max_delta.max(b.curvature * delta_metric);
                for (g, (&d, &w)) in delta.iter().zip(b.weights).enumerate() {
                    let dw = d * w;
                    if dw == T::zero() {
                        continue;
                    }
                    let col = &b.mat[g * n..(g + 1) * n];
                    for (r, &x) in resid.iter_mut().zip(col) {
                        *r = *r - dw * x;
                    }
                }
            }

            if let Some(tr) = trace.as_deref_mut() {
                tr.push(engine_objective(&resid, blocks, beta));
            }
        }
        cycles += 1;
        if !max_delta.is_finite() {
            return Err(Error::Numeric("non-finite block update".into()));
        }

        if max_delta <= opts.tol {
            delta_converged = true;
            let due = last_kkt.map_or(true, |(c, _)| cycles - c >= KKT_CHECK_EVERY);
            if due {
                let gap = kkt_gap_from_residuals(&resid, blocks, beta);
                if gap <= kkt_tol {
                    kkt_converged = true;
                    break;
                }
                if max_delta == T::zero() {
                    // Exact fixed point of the updates; nothing more to do.
                    break;
                }
                if let Some((c, g)) = last_kkt {
                    if projected_miss(gap, g, cycles - c, opts.max_iter - cycles, kkt_tol) {
                        break;
                    }
                }
                last_kkt = Some((cycles, gap));
            }
        } else {
            delta_converged = false;
            window_min = window_min.min(max_delta);
            if cycles % STALL_WINDOW == 0 {
                if prev_window_min.is_finite()
                    && projected_miss(
                        window_min,
                        prev_window_min,
                        STALL_WINDOW,
                        opts.max_iter - cycles,
                        opts.tol,
                    )
                {
                    break;
                }
                prev_window_min = window_min;
                window_min = T::infinity();
            }
        }

        if cycles % RECOMPUTE_EVERY == 0 {
            resid = compute_residuals(y, blocks, beta);
        }
    }

    let resid = compute_residuals(y, blocks, beta);
    if resid.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numeric("non-finite residuals".into()));
    }
    let kkt_gap = kkt_gap_from_residuals(&resid, blocks, beta);
    let converged = delta_converged && (kkt_converged || kkt_gap <= kkt_tol);
    Ok(EngineExit { cycles, converged, kkt_gap, resid })
}

fn default_kkt_tol<T: Scalar>(data: &Dataset<T>) -> T {
    match r_max(data) {
        Ok(r) => T::from_f64_lossy(KKT_TOL_FACTOR) * r,
        Err(_) => T::infinity(),
    }
}

fn engine_blocks_from_dataset<'a, T: Scalar>(
    data: &'a Dataset<T>,
    weights: &PenaltyWeights<T>,
) -> Vec<EngineBlock<'a, T>> {
    (0..data.n_blocks())
        .map(|j| EngineBlock {
            mat: data.block_matrix(j),
            weights: data.space().block(j).weights(),
            lambda: weights.lambda[j],
            curvature: weights.n_weights[j],
        })
        .collect()
}

fn finish_fit<T: Scalar>(
    beta: Coefficient<T>,
    exit: EngineExit<T>,
    blocks: &[EngineBlock<T>],
    bufs: &[Vec<T>],
) -> FitResult<T> {
    let objective = engine_objective(&exit.resid, blocks, bufs);
    let support = beta.support();
    FitResult {
        beta,
        support,
        objective,
        n_iterations: exit.cycles,
        converged: exit.converged,
        kkt_gap: exit.kkt_gap,
    }
}

fn gpd_fit_impl<T: Scalar>(
    data: &Dataset<T>,
    weights: &PenaltyWeights<T>,
    init: &Coefficient<T>,
    opts: &SolverOptions<T>,
    trace: Option<&mut Vec<T>>,
) -> Result<FitResult<T>> {
    if !init.conforms_to(data.space()) {
        return Err(Error::SpecMismatch("gpd_fit init".into()));
    }
    if weights.lambda.len() != data.n_blocks() {
        return Err(Error::InvalidParameter("penalty weights do not match dataset".into()));
    }
    let blocks = engine_blocks_from_dataset(data, weights);
    let mut bufs: Vec<Vec<T>> = init.blocks().iter().map(|b| b.values().to_vec()).collect();
    let kkt_tol = opts.kkt_tol.unwrap_or_else(|| default_kkt_tol(data));
    let exit = gpd_engine(data.y(), &blocks, &mut bufs, opts, kkt_tol, trace)?;

    let mut beta = Coefficient::zeros(data.space());
    for (j, buf) in bufs.iter().enumerate() {
        beta.block_mut(j).values_mut().copy_from_slice(buf);
    }
    Ok(finish_fit(beta, exit, &blocks, &bufs))
}

/// Solve the group-penalized criterion from a warm start.
///
/// Stops when `max_j N_j ||delta beta_j||^2` over a full cycle drops below
/// `opts.tol` or after `opts.max_iter` cycles; hitting the cycle limit is
/// reported as `converged = false`, not an error.
pub fn gpd_fit<T: Scalar>(
    data: &Dataset<T>,
    weights: &PenaltyWeights<T>,
    init: &Coefficient<T>,
    opts: &SolverOptions<T>,
) -> Result<FitResult<T>> {
    gpd_fit_impl(data, weights, init, opts, None)
}

/// `gpd_fit` recording the penalized objective after every block update.
pub fn gpd_fit_with_trace<T: Scalar>(
    data: &Dataset<T>,
    weights: &PenaltyWeights<T>,
    init: &Coefficient<T>,
    opts: &SolverOptions<T>,
) -> Result<(FitResult<T>, Vec<T>)> {
    let mut trace = Vec::new();
    let fit = gpd_fit_impl(data, weights, init, opts, Some(&mut trace))?;
    Ok((fit, trace))
}

/// Max blockwise violation of the stationarity conditions of the criterion
/// at `beta`: active blocks must have gradient `lambda_j beta_j/||beta_j||`,
/// inactive ones gradient norm at most `lambda_j`.
pub fn kkt_check<T: Scalar>(
    data: &Dataset<T>,
    weights: &PenaltyWeights<T>,
    beta: &Coefficient<T>,
) -> Result<T> {
    if !beta.conforms_to(data.space()) {
        return Err(Error::SpecMismatch("kkt_check".into()));
    }
    let blocks = engine_blocks_from_dataset(data, weights);
    let bufs: Vec<Vec<T>> = beta.blocks().iter().map(|b| b.values().to_vec()).collect();
    let resid = compute_residuals(data.y(), &blocks, &bufs);
    Ok(kkt_gap_from_residuals(&resid, &blocks, &bufs))
}

/// Solve the criterion restricted to the span of the first `m` global basis
/// elements and map the solution back to the product space.
///
/// Because every basis element lives in a single block, the group penalty of
/// the original problem equals the group penalty over per-block coordinate
/// groups, and the same blockwise update applies in coordinates (with
/// curvature taken from the projected design).
pub fn gpd_fit_projected<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    m: usize,
    weights: &PenaltyWeights<T>,
    opts: &SolverOptions<T>,
) -> Result<FitResult<T>> {
    let scores = covariance::scores(data, basis, m)?;
    gpd_fit_projected_with_scores(data, basis, &scores, m, weights, opts, None)
}

/// `gpd_fit_projected` on precomputed scores (first `m` columns are used);
/// `init` is an optional warm start living in the basis span.
pub(crate) fn gpd_fit_projected_with_scores<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    scores: &[T],
    m: usize,
    weights: &PenaltyWeights<T>,
    opts: &SolverOptions<T>,
    init: Option<&Coefficient<T>>,
) -> Result<FitResult<T>> {
    if m > basis.len() {
        return Err(Error::DimensionOutOfRange { dim: m, size: basis.len() });
    }
    if weights.lambda.len() != data.n_blocks() {
        return Err(Error::InvalidParameter("penalty weights do not match dataset".into()));
    }
    let n = data.n();
    let p = data.n_blocks();

    // Coordinate groups per block among the first m global elements.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (k, &(j, _)) in basis.order()[..m].iter().enumerate() {
        groups[j].push(k);
    }
    let present: Vec<usize> = (0..p).filter(|&j| !groups[j].is_empty()).collect();

    let inv_n = T::one() / T::from_count(n);
    let mut mats: Vec<Vec<T>> = Vec::with_capacity(present.len());
    let mut ones: Vec<Vec<T>> = Vec::with_capacity(present.len());
    let mut curvatures: Vec<T> = Vec::with_capacity(present.len());
    for &j in &present {
        let g = &groups[j];
        let mut mat = vec![T::zero(); g.len() * n];
        let mut curv = T::zero();
        for (c, &k) in g.iter().enumerate() {
            let col = &scores[k * n..(k + 1) * n];
            mat[c * n..(c + 1) * n].copy_from_slice(col);
            curv = curv + col.iter().map(|&s| s * s).sum::<T>() * inv_n;
        }
        mats.push(mat);
        ones.push(vec![T::one(); g.len()]);
        curvatures.push(curv);
    }
    let blocks: Vec<EngineBlock<T>> = present
        .iter()
        .enumerate()
        .map(|(b, &j)| EngineBlock {
            mat: &mats[b],
            weights: &ones[b],
            lambda: weights.lambda[j],
            curvature: curvatures[b],
        })
        .collect();

    let mut bufs: Vec<Vec<T>> = present.iter().map(|&j| vec![T::zero(); groups[j].len()]).collect();
    if let Some(start) = init {
        if !start.conforms_to(data.space()) {
            return Err(Error::SpecMismatch("projected warm start".into()));
        }
        for (b, &j) in present.iter().enumerate() {
            let w = basis.space().block(j).weights();
            for (c, &k) in groups[j].iter().enumerate() {
                let (_, e) = basis.global_element(k);
                bufs[b][c] = crate::hilbert::weighted_dot(start.block(j).values(), e, w);
            }
        }
    }

    let kkt_tol = opts.kkt_tol.unwrap_or_else(|| default_kkt_tol(data));
    let exit = gpd_engine(data.y(), &blocks, &mut bufs, opts, kkt_tol, None)?;

    // Map coordinates back to the product space.
    let mut beta = Coefficient::zeros(basis.space());
    for (b, &j) in present.iter().enumerate() {
        let vals = beta.block_mut(j).values_mut();
        for (c, &k) in groups[j].iter().enumerate() {
            let coef = bufs[b][c];
            if coef == T::zero() {
                continue;
            }
            let (_, e) = basis.global_element(k);
            for (v, &ev) in vals.iter_mut().zip(e) {
                *v = *v + coef * ev;
            }
        }
    }
    Ok(finish_fit(beta, exit, &blocks, &bufs))
}

/// Controls for pathwise fitting over the penalty grid.
#[derive(Clone, Debug)]
pub struct PathOptions<T> {
    /// Ratio of the smallest to the largest grid value.
    pub delta: T,
    /// Number of grid points.
    pub n_r: usize,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for PathOptions<T> {
    fn default() -> Self {
        Self {
            delta: T::from_f64_lossy(1e-3),
            n_r: 100,
            solver: SolverOptions::default(),
        }
    }
}

/// Fits along a decreasing penalty grid.
#[derive(Clone, Debug)]
pub struct PathResult<T> {
    /// Decreasing grid of penalty scales, `grid[0] = r_max`.
    pub grid: Vec<T>,
    /// One fit per grid entry, aligned with `grid`.
    pub fits: Vec<FitResult<T>>,
    /// Per-grid-entry block norms (`per_r_block_norms[k][j]`).
    pub per_r_block_norms: Vec<Vec<T>>,
    /// Index into `grid` of the smallest converged entry.
    pub feasible_idx: Option<usize>,
}

impl<T: Scalar> PathResult<T> {
    /// Smallest grid value whose fit converged.
    pub fn r_min_feasible(&self) -> Option<T> {
        self.feasible_idx.map(|k| self.grid[k])
    }

    /// Fit at the smallest converged grid value.
    pub fn feasible_fit(&self) -> Option<&FitResult<T>> {
        self.feasible_idx.map(|k| &self.fits[k])
    }
}

/// Log-spaced decreasing grid from `r_max` down to `delta * r_max`.
fn penalty_grid<T: Scalar>(rmax: T, delta: T, n_r: usize) -> Result<Vec<T>> {
    if n_r == 0 {
        return Err(Error::InvalidParameter("grid needs at least one point".into()));
    }
    if !(delta > T::zero() && delta <= T::one()) {
        return Err(Error::InvalidParameter("delta must be in (0, 1]".into()));
    }
    if rmax == T::zero() {
        // No signal: the only meaningful penalty level is zero.
        return Ok(vec![T::zero()]);
    }
    if n_r == 1 {
        return Ok(vec![rmax]);
    }
    let rmin = delta * rmax;
    let log_max = rmax.ln();
    let step = (log_max - rmin.ln()) / T::from_count(n_r - 1);
    let mut grid = Vec::with_capacity(n_r);
    grid.push(rmax);
    for k in 1..n_r - 1 {
        grid.push((log_max - T::from_count(k) * step).exp());
    }
    grid.push(rmin);
    Ok(grid)
}

fn run_path<T: Scalar>(
    data: &Dataset<T>,
    opts: &PathOptions<T>,
    mut fitter: impl FnMut(&PenaltyWeights<T>, &Coefficient<T>, &SolverOptions<T>) -> Result<FitResult<T>>,
) -> Result<PathResult<T>> {
    let rmax = r_max(data)?;
    let grid = penalty_grid(rmax, opts.delta, opts.n_r)?;
    let mut solver = opts.solver.clone();
    if solver.kkt_tol.is_none() {
        solver.kkt_tol = Some(T::from_f64_lossy(KKT_TOL_FACTOR) * rmax);
    }

    let p = data.n_blocks();
    let mut fits: Vec<FitResult<T>> = Vec::with_capacity(grid.len());
    let mut norms: Vec<Vec<T>> = Vec::with_capacity(grid.len());
    let mut warm = Coefficient::zeros(data.space());
    for &r in &grid {
        let weights = penalty_weights(data, r)?;
        let fit = match fitter(&weights, &warm, &solver) {
            Ok(fit) => fit,
            Err(Error::Numeric(_)) => FitResult {
                // Diverged fit: keep the path total, flag non-convergence.
                beta: warm.clone(),
                support: warm.support(),
                objective: T::infinity(),
                n_iterations: solver.max_iter,
                converged: false,
                kkt_gap: T::infinity(),
            },
            Err(e) => return Err(e),
        };
        warm = fit.beta.clone();
        norms.push(fit.beta.block_norms());
        fits.push(fit);
    }
    debug_assert!(norms.iter().all(|row| row.len() == p));

    let feasible_idx = (0..grid.len()).rev().find(|&k| fits[k].converged);
    Ok(PathResult { grid, fits, per_r_block_norms: norms, feasible_idx })
}

/// Fit the full criterion over the penalty grid, warm-starting each fit
/// from the previous (larger) grid value.
pub fn fit_path<T: Scalar>(data: &Dataset<T>, opts: &PathOptions<T>) -> Result<PathResult<T>> {
    run_path(data, opts, |weights, warm, solver| gpd_fit(data, weights, warm, solver))
}

/// Pathwise fitting of the projected criterion at fixed dimension `m`.
pub fn fit_path_projected<T: Scalar>(
    data: &Dataset<T>,
    basis: &PcaBasis<T>,
    m: usize,
    opts: &PathOptions<T>,
) -> Result<PathResult<T>> {
    let scores = covariance::scores(data, basis, m)?;
    run_path(data, opts, |weights, warm, solver| {
        gpd_fit_projected_with_scores(data, basis, &scores, m, weights, solver, Some(warm))
    })
}
