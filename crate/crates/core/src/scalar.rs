//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Probabilities, eigen-pairs and estimates are generic over [`Real`], which is
//! implemented for `f32` and `f64`. Tolerances are part of the trait because a
//! single-precision model cannot meet double-precision thresholds.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// floating point: f32 or f64
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Inputs whose probabilities miss 1 by more than this are rejected.
    fn normalize_tol() -> Self;
    /// Post-normalization bound on `|sum p - 1|`.
    fn mass_tol() -> Self;
    /// L1 change between power-iteration iterates that counts as converged.
    fn eigen_step_tol() -> Self;
    /// Largest accepted eigen-residual `|b M - rho b|_1`.
    fn eigen_residual_tol() -> Self;
}

impl Real for f64 {
    fn normalize_tol() -> Self {
        1e-9
    }
    fn mass_tol() -> Self {
        1e-12
    }
    fn eigen_step_tol() -> Self {
        1e-13
    }
    fn eigen_residual_tol() -> Self {
        1e-10
    }
}

impl Real for f32 {
    fn normalize_tol() -> Self {
        1e-5
    }
    fn mass_tol() -> Self {
        1e-6
    }
    fn eigen_step_tol() -> Self {
        1e-6
    }
    fn eigen_residual_tol() -> Self {
        1e-4
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in every Real")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: u64) -> T {
    T::from_u64(n).expect("count representable in every Real")
}
