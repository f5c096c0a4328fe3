//! Synthetic data generators for the two benchmark designs.
//!
//! Seven covariate blocks: three curves (Brownian motion; a smooth
//! four-parameter family; its pointwise square), one 4-vector, and three
//! scalars (a standard normal and two centered norm functionals of the
//! curve blocks). The response is the model inner product plus Gaussian
//! noise. Example 1 puts signal on the Brownian block only; example 2 adds
//! the vector block and the last scalar.
//!
//! All randomness flows from one seed through a fixed draw order, so a
//! given configuration always produces bit-identical data.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hilbert::{BlockSpec, Coefficient, Dataset, SpaceSpec};
use crate::scalar::Scalar;

/// Mixing matrix of the vector block.
const VECTOR_MIX: [[f64; 4]; 4] = [
    [-1.0, 0.0, 1.0, 2.0],
    [3.0, -1.0, 0.0, 1.0],
    [2.0, 3.0, -1.0, 0.0],
    [1.0, 2.0, 3.0, -1.0],
];

/// Floor applied to |curve| values before taking logarithms.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SimConfig<T> {
    /// Benchmark design, 1 or 2.
    pub example: u8,
    pub n: usize,
    /// Noise standard deviation.
    pub sigma: T,
    /// Number of uniform grid points on [0, 1] per curve.
    pub grid_size: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            example: 1,
            n: 1000,
            sigma: T::from_f64_lossy(0.01),
            grid_size: 100,
            seed: 0,
        }
    }
}

/// A generated sample with its ground truth.
#[derive(Clone, Debug)]
pub struct SimulatedData<T> {
    /// Uncentered dataset (callers decide when to `prepare`).
    pub dataset: Dataset<T>,
    pub true_beta: Coefficient<T>,
    /// Blocks carrying signal (0-based indices).
    pub support: BTreeSet<usize>,
}

/// Generate one sample of the chosen benchmark design.
pub fn simulate<T: Scalar>(config: &SimConfig<T>) -> Result<SimulatedData<T>> {
    if !(config.example == 1 || config.example == 2) {
        return Err(Error::InvalidParameter(format!(
            "example must be 1 or 2, got {}",
            config.example
        )));
    }
    if config.n < 2 {
        return Err(Error::InvalidParameter("n must be at least 2".into()));
    }
    if config.grid_size < 2 {
        return Err(Error::InvalidParameter("grid_size must be at least 2".into()));
    }
    let sigma = config.sigma.to_f64().unwrap_or(f64::NAN);
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }

    let n = config.n;
    let g = config.grid_size;
    let grid: Vec<f64> = (0..g).map(|k| k as f64 / (g - 1) as f64).collect();

    let space = SpaceSpec::new(vec![
        BlockSpec::curve(grid.iter().map(|&t| T::from_f64_lossy(t)).collect())?,
        BlockSpec::curve(grid.iter().map(|&t| T::from_f64_lossy(t)).collect())?,
        BlockSpec::curve(grid.iter().map(|&t| T::from_f64_lossy(t)).collect())?,
        BlockSpec::vector(4)?,
        BlockSpec::scalar(),
        BlockSpec::scalar(),
        BlockSpec::scalar(),
    ]);
    let weights: Vec<f64> = space
        .block(0)
        .weights()
        .iter()
        .map(|w| w.to_f64().expect("weight"))
        .collect();
    let trapz_sq = |vals: &[f64]| -> f64 {
        vals.iter().zip(&weights).map(|(&v, &w)| w * v * v).sum::<f64>()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let uniform = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| -> f64 {
        lo + (hi - lo) * rng.gen::<f64>()
    };

    // Raw per-block storage (column-major: value[g * n + i]).
    let mut brownian = vec![0.0f64; g * n];
    let mut smooth = vec![0.0f64; g * n];
    let mut smooth_sq = vec![0.0f64; g * n];
    let mut mixed = vec![0.0f64; 4 * n];
    let mut gauss = vec![0.0f64; n];
    let mut smooth_norm = vec![0.0f64; n];
    let mut log_norm = vec![0.0f64; n];

    let mut bm_path = vec![0.0f64; g];
    // Draw order per observation: Brownian increments, then the four
    // smooth-family parameters, then the vector block, then the scalar.
    for i in 0..n {
        bm_path[0] = 0.0;
        for k in 1..g {
            let z: f64 = rng.sample(StandardNormal);
            bm_path[k] = bm_path[k - 1] + z * (grid[k] - grid[k - 1]).sqrt();
        }
        let a = uniform(-50.0, 50.0, &mut rng);
        let b = uniform(-30.0, 30.0, &mut rng);
        let c = uniform(-5.0, 5.0, &mut rng);
        let dpar = uniform(-1.0, 1.0, &mut rng);
        let z: Vec<f64> = (0..4).map(|_| uniform(-0.5, 0.5, &mut rng)).collect();
        let x5: f64 = rng.sample(StandardNormal);

        let mut smooth_path = vec![0.0f64; g];
        for (k, &t) in grid.iter().enumerate() {
            let v = a + b * t + c * t.exp() + (dpar * t).sin();
            smooth_path[k] = v;
            brownian[k * n + i] = bm_path[k];
            smooth[k * n + i] = v;
            smooth_sq[k * n + i] = v * v;
        }
        for (row, m) in VECTOR_MIX.iter().enumerate() {
            mixed[row * n + i] = m.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        }
        gauss[i] = x5;
        smooth_norm[i] = trapz_sq(&smooth_path).sqrt();
        let logs: Vec<f64> =
            bm_path.iter().map(|&v| v.abs().max(LOG_FLOOR).ln()).collect();
        log_norm[i] = trapz_sq(&logs).sqrt();
    }

    // The norm functionals are centered with empirical means.
    let mean_smooth_norm = smooth_norm.iter().sum::<f64>() / n as f64;
    let mean_log_norm = log_norm.iter().sum::<f64>() / n as f64;
    for v in smooth_norm.iter_mut() {
        *v -= mean_smooth_norm;
    }
    for v in log_norm.iter_mut() {
        *v -= mean_log_norm;
    }

    // Ground truth.
    let mut true_beta = Coefficient::zeros(&space);
    {
        let vals = true_beta.block_mut(0).values_mut();
        for (v, &t) in vals.iter_mut().zip(&grid) {
            *v = T::from_f64_lossy(10.0 * (2.0 * std::f64::consts::PI * t).cos());
        }
    }
    let mut support: BTreeSet<usize> = [0].into_iter().collect();
    if config.example == 2 {
        true_beta
            .block_mut(3)
            .values_mut()
            .copy_from_slice(&[T::one(), -T::one(), T::zero(), T::from_f64_lossy(3.0)]);
        true_beta.block_mut(6).values_mut()[0] = T::one();
        support.insert(3);
        support.insert(6);
    }
    let slope_curve: Vec<f64> = grid
        .iter()
        .map(|&t| 10.0 * (2.0 * std::f64::consts::PI * t).cos())
        .collect();

    // Response: model inner product plus noise (noise drawn last).
    let mut y = vec![0.0f64; n];
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            acc += w * slope_curve[k] * brownian[k * n + i];
        }
        if config.example == 2 {
            acc += mixed[i] - mixed[n + i] + 3.0 * mixed[3 * n + i];
            acc += log_norm[i];
        }
        *yi = acc;
    }
    for yi in y.iter_mut() {
        let eps: f64 = rng.sample(StandardNormal);
        *yi += sigma * eps;
    }

    let convert = |v: &[f64]| -> Vec<T> { v.iter().map(|&x| T::from_f64_lossy(x)).collect() };
    let dataset = Dataset::from_parts(
        space,
        vec![
            convert(&brownian),
            convert(&smooth),
            convert(&smooth_sq),
            convert(&mixed),
            convert(&gauss),
            convert(&smooth_norm),
            convert(&log_norm),
        ],
        convert(&y),
    )?;
    Ok(SimulatedData { dataset, true_beta, support })
}
