//! Scalar abstraction for the whole crate.
//!
//! All estimation code is generic over the floating-point type; `f64` is the
//! default used by the CLI and the `*64` aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable everywhere in the crate.
///
/// Automatically implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal (tolerances, grid constants).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    /// Conversion from a count, used for `1/n`-style normalisations.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize not representable")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}
