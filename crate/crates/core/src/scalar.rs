//! Scalar abstraction shared by every numerical module.
//!
//! All decompositions are written against [`Real`], which is implemented for
//! `f32` and `f64`. Complex quantities are `num_complex::Complex<T>`; nalgebra
//! provides the `ComplexField` implementation used by the factorizations.

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type the decomposition is generic over.
pub trait Real:
    RealField
    + faer::traits::RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon of the type.
    fn eps() -> Self;

    /// Lossless-or-rounding conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest positive normal number.
    fn tiny() -> Self;
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
    fn tiny() -> Self {
        f64::MIN_POSITIVE
    }
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
    fn tiny() -> Self {
        f32::MIN_POSITIVE
    }
}

pub type C<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

#[inline]
pub(crate) fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn creal<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub(crate) fn cabs<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Principal argument in `(-pi, pi]`.
#[inline]
pub(crate) fn carg<T: Real>(z: Complex<T>) -> T {
    let a = z.im.atan2(z.re);
    if a <= -T::pi() {
        a + T::two_pi()
    } else {
        a
    }
}

#[inline]
pub(crate) fn cfinite<T: Real>(z: Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Squared Frobenius norm without overflow-prone intermediate square roots.
pub(crate) fn frob2<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}
