//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the optimizers and estimators are written against.
///
/// Implemented for `f32` and `f64`. Tolerances that the algorithms compare
/// against are exposed per type so that `f32` instances do not chase
/// precision they cannot represent.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Slack allowed on `Σ p = 1` and similar normalization checks.
    fn mass_tolerance() -> Self;

    /// Pivot/feasibility tolerance used by the simplex solver.
    fn pivot_tolerance() -> Self;

    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn mass_tolerance() -> Self {
        1e-9
    }

    fn pivot_tolerance() -> Self {
        1e-11
    }
}

impl Scalar for f32 {
    fn mass_tolerance() -> Self {
        1e-5
    }

    fn pivot_tolerance() -> Self {
        1e-6
    }
}

/// Converts a slice of `f64` into the target scalar type.
pub fn cast_vec<T: Scalar>(values: &[f64]) -> Vec<T> {
    values.iter().map(|&v| T::lit(v)).collect()
}
