//! Scalar abstraction for the numeric core.
//!
//! All payoff arithmetic, elimination, and dynamic programming is generic over
//! [`Scalar`], so the same code runs in `f64`/`f32` and, where exactness is
//! required, in arbitrary-precision rationals ([`num_rational::BigRational`]).
//! The stochastic parts (noise sampling, confidence widths) additionally need
//! [`Real`], which only floating-point types satisfy.

use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Signed, ToPrimitive};

/// Field-like scalar: exact rationals or floating point.
pub trait Scalar:
    Clone + std::fmt::Debug + PartialEq + PartialOrd + Signed + FromPrimitive + ToPrimitive
{
    /// Relative pivot tolerance for elimination; `None` means exact arithmetic.
    fn pivot_tolerance() -> Option<Self>;

    /// Whether `self` should be treated as zero relative to `scale`
    /// (the largest magnitude seen in the column being reduced).
    fn is_negligible(&self, scale: &Self) -> bool {
        match Self::pivot_tolerance() {
            None => self.is_zero(),
            Some(tol) => {
                let floor = if *scale < Self::one() { Self::one() } else { scale.clone() };
                self.abs() <= tol * floor
            }
        }
    }
}

/// Floating-point scalar for noise models and confidence computations.
pub trait Real: Scalar + Float {}

impl Scalar for f64 {
    fn pivot_tolerance() -> Option<Self> {
        Some(1e-8)
    }
}

impl Scalar for f32 {
    fn pivot_tolerance() -> Option<Self> {
        Some(1e-4)
    }
}

impl Scalar for BigRational {
    fn pivot_tolerance() -> Option<Self> {
        None
    }
}

impl Real for f64 {}
impl Real for f32 {}
