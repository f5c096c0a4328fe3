//! Group-sparse estimation for regression on mixed curve / vector / scalar
//! covariates.
//!
//! The model links a real response to a tuple of covariate blocks through a
//! sum of block inner products. Whole blocks are selected or discarded by a
//! group penalty; the crate provides the block coordinate-descent solver,
//! pathwise fitting over a penalty grid, PCA-based projection with
//! dimension selection, tuning-parameter selection rules, ridge debiasing
//! of the selected blocks, synthetic data generators and CSV persistence.
//!
//! Everything is generic over the scalar type; see the `*64` aliases below
//! for the common `f64` instantiation.

pub mod covariance;
pub mod data;
pub mod debias;
pub mod error;
pub mod hilbert;
mod linalg;
pub mod scalar;
pub mod selection;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the core types.
pub type BlockSpec64 = hilbert::BlockSpec<f64>;
pub type BlockElement64 = hilbert::BlockElement<f64>;
pub type Coefficient64 = hilbert::Coefficient<f64>;
pub type Dataset64 = hilbert::Dataset<f64>;
pub type SpaceSpec64 = hilbert::SpaceSpec<f64>;
pub type PcaBasis64 = covariance::PcaBasis<f64>;
pub type FitResult64 = solver::FitResult<f64>;
pub type PathResult64 = solver::PathResult<f64>;
pub type SelectionReport64 = selection::SelectionReport<f64>;
pub type DebiasResult64 = debias::DebiasResult<f64>;

/// `f32` instantiations of the core types.
pub type Dataset32 = hilbert::Dataset<f32>;
pub type Coefficient32 = hilbert::Coefficient<f32>;
pub type FitResult32 = solver::FitResult<f32>;
