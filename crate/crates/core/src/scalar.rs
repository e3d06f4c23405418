//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numeric modules are generic over.
///
/// `f64` is the supported precision for every file format and the default
/// throughout; `f32` satisfies the bound for experiments where model files
/// are not involved.
pub trait Scalar:
    Float + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used when seeding parameters and reading files.
    fn from_f64(v: f64) -> Self;

    /// Widening conversion to `f64`, used when writing files and reports.
    fn to_f64(self) -> f64;
}

impl<T> Scalar for T
where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static,
{
    fn from_f64(v: f64) -> Self {
        <T as FromPrimitive>::from_f64(v).expect("finite f64 must convert")
    }

    fn to_f64(self) -> f64 {
        <T as ToPrimitive>::to_f64(&self).expect("scalar must widen to f64")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm<F: Scalar>(xs: &[F]) -> F {
        xs.iter()
            .map(|x| *x * *x)
            .fold(F::zero(), |a, b| a + b)
            .sqrt()
    }

    #[test]
    fn generic_over_both_widths() {
        assert!((norm(&[3.0f32, 4.0f32]) - 5.0).abs() < 1e-6);
        assert!((norm(&[3.0f64, 4.0f64]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let v = 0.1f64 + 0.2;
        assert_eq!(<f64 as Scalar>::to_f64(v), v);
        assert_eq!(<f64 as Scalar>::from_f64(v), v);
    }
}
