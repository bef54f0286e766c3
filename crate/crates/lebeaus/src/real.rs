//! Scalar abstraction for the numeric core.
//!
//! Every algorithm in this crate is generic over [`Real`], so the same code
//! runs in `f32` or `f64`. The crate root pins the default instantiation to
//! `f64`: cubes are stored on disk as little-endian `f32`, but estimators,
//! eigendecompositions, and distance kernels should not lose precision to the
//! storage format unless the caller opts into it.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the crate is generic over (`f32` or `f64`).
///
/// Extends [`num_traits::Float`] with the conversions the estimators need:
/// configuration knobs and physical constants are plain `f64` and have to be
/// injected into generic code, and diagnostics go the other way.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`, rounding if `Self` is narrower.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert to a Real scalar")
    }

    /// Widens `self` to `f64` (exact for `f32` and `f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real scalar must widen to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
