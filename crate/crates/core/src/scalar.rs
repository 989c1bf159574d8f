//! Real scalar abstraction shared by the operator algebra and the integrator.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_complex::Complex;

/// Floating-point type usable as the real part of operator entries.
///
/// Implemented for `f32` and `f64`. Physics-level modules fix `f64`; the
/// algebra and master-equation solver stay generic so reduced-precision runs
/// are possible where tolerances allow.
pub trait Real: RealField + Copy + Send + Sync + Debug + Display + 'static {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion to `f64`, used for reporting and tolerance checks.
    fn to_f64(self) -> f64;

    /// Machine epsilon.
    fn eps() -> Self;
}

impl Real for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Complex scalar over a [`Real`].
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

/// Squared modulus without the square root.
#[inline]
pub(crate) fn norm_sqr<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// Modulus, using `RealField` only.
#[inline]
pub(crate) fn abs<T: Real>(z: C<T>) -> T {
    norm_sqr(z).sqrt()
}
