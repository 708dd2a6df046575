//! Scalar abstractions shared by every field and solver.
//!
//! All numerical code is written against [`Real`] (the floating-point type)
//! and [`Sample`] (the element type stored in a field, either a real or a
//! complex number built on a `Real`). `f64` is the working precision used by
//! the file formats and the experiment harness; `f32` works everywhere else.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive, Zero};
use rustfft::FftNum;

/// Floating-point scalar usable by the FFT back end and the solvers.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Display
    + LowerExp
    + Sum
    + NumAssign
    + Sample<Real = Self>
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count or index into this type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + FftNum
        + Default
        + Display
        + LowerExp
        + Sum
        + NumAssign
        + Sample<Real = T>
        + Send
        + Sync
        + 'static
{
}

/// Element type of a [`crate::Field2D`]: a real number or a complex number.
pub trait Sample:
    Copy
    + Zero
    + PartialEq
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    type Real: Real;

    /// `|x|²`
    fn abs_sq(self) -> Self::Real;
    /// `|x|`
    fn modulus(self) -> Self::Real;
    fn conjugate(self) -> Self;
    fn is_finite_sample(self) -> bool;
    /// Multiplies by a real factor.
    fn scale(self, r: Self::Real) -> Self;
    /// Lifts a real value into this sample type.
    fn from_real(r: Self::Real) -> Self;
    /// `Re(conj(self) * other)`, the real inner product on the ℝ² embedding.
    fn real_dot(self, other: Self) -> Self::Real;
}

macro_rules! real_sample {
    ($t:ty) => {
        impl Sample for $t {
            type Real = $t;
            #[inline]
            fn abs_sq(self) -> $t {
                self * self
            }
            #[inline]
            fn modulus(self) -> $t {
                self.abs()
            }
            #[inline]
            fn conjugate(self) -> $t {
                self
            }
            #[inline]
            fn is_finite_sample(self) -> bool {
                self.is_finite()
            }
            #[inline]
            fn scale(self, r: $t) -> $t {
                self * r
            }
            #[inline]
            fn from_real(r: $t) -> $t {
                r
            }
            #[inline]
            fn real_dot(self, other: $t) -> $t {
                self * other
            }
        }
    };
}

real_sample!(f32);
real_sample!(f64);

impl<R: Real> Sample for Complex<R> {
    type Real = R;
    #[inline]
    fn abs_sq(self) -> R {
        self.norm_sqr()
    }
    #[inline]
    fn modulus(self) -> R {
        self.norm()
    }
    #[inline]
    fn conjugate(self) -> Self {
        self.conj()
    }
    #[inline]
    fn is_finite_sample(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    #[inline]
    fn scale(self, r: R) -> Self {
        Complex::new(self.re * r, self.im * r)
    }
    #[inline]
    fn from_real(r: R) -> Self {
        Complex::new(r, R::zero())
    }
    #[inline]
    fn real_dot(self, other: Self) -> R {
        self.re * other.re + self.im * other.im
    }
}
