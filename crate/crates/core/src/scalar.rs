//! Floating-point abstraction shared by every estimator in the crate.
//!
//! All numerical code is written against [`Scalar`] rather than a concrete
//! float so the same routines serve `f64` (the default everywhere) and `f32`
//! (useful for memory-bound Monte Carlo work where six digits are enough).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used by the estimators.
///
/// Besides the usual `num-traits` float surface this adds the complementary
/// error function and its inverse, which the probit link needs and which
/// `num-traits` does not provide.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Inverse of [`Scalar::erfc`] on `(0, 2)`.
    fn erfc_inv(self) -> Self;

    /// Gradient tolerance used by iterative solvers when the caller does not
    /// supply one.
    fn default_gradient_tolerance() -> Self;
}

impl Scalar for f64 {
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    fn erfc_inv(self) -> Self {
        statrs::function::erf::erfc_inv(self)
    }

    fn default_gradient_tolerance() -> Self {
        1e-8
    }
}

impl Scalar for f32 {
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    fn erfc_inv(self) -> Self {
        statrs::function::erf::erfc_inv(self as f64) as f32
    }

    fn default_gradient_tolerance() -> Self {
        1e-3
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion used for diagnostics and error payloads.
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    lit::<T>(0.5) * (-x / T::SQRT_2()).erfc()
}

/// Standard normal upper tail, `1 - Φ(x)`, without cancellation.
#[inline]
pub fn norm_sf<T: Scalar>(x: T) -> T {
    lit::<T>(0.5) * (x / T::SQRT_2()).erfc()
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() / lit(2.0);
    inv_sqrt_2pi * (-(x * x) / lit(2.0)).exp()
}

/// Standard normal quantile.
#[inline]
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    -T::SQRT_2() * (p + p).erfc_inv()
}

/// Standard normal quantile parameterised by the upper tail probability.
#[inline]
pub fn norm_quantile_upper<T: Scalar>(q: T) -> T {
    T::SQRT_2() * (q + q).erfc_inv()
}

/// Sorts a slice of scalars ascending. NaNs are not expected here; they
/// compare equal to everything so the sort stays total.
pub fn sort_scalars<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
}

/// Linear-interpolation quantile (type 7) of already sorted data.
pub fn sorted_quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = lit::<T>(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
