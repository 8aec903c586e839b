//! Scalar abstractions shared by the numerical modules.
//!
//! Two layers:
//! - [`Field`]: the arithmetic needed to *evaluate* the coefficient equations.
//!   Floats implement it, and so does [`Series`], a truncated power series
//!   used to extract the small-impact expansion orders by coefficient matching.
//! - [`Real`]: a floating point scalar (`f32`/`f64`) for everything that
//!   needs square roots, comparisons or tolerances.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, FromPrimitive, One, ToPrimitive, Zero};

/// Commutative ring with division by invertible elements.
pub trait Field:
    Copy
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl<T> Field for T where
    T: Copy
        + Zero
        + One
        + Add<Output = T>
        + Sub<Output = T>
        + Mul<Output = T>
        + Div<Output = T>
        + Neg<Output = T>
{
}

/// Floating point scalar used by the solvers.
pub trait Real:
    Field + Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Truncated power series `c[0] + c[1] t + ... + c[N-1] t^(N-1)`.
///
/// Arithmetic drops every term of degree `>= N`, so evaluating a polynomial
/// system on series arguments yields its Taylor coefficients in `t` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series<T, const N: usize>(pub [T; N]);

impl<T: Real, const N: usize> Series<T, N> {
    pub fn constant(c: T) -> Self {
        let mut s = [T::zero(); N];
        s[0] = c;
        Series(s)
    }

    /// `c0 + c1 t`.
    pub fn linear(c0: T, c1: T) -> Self {
        let mut s = Self::constant(c0);
        if N > 1 {
            s.0[1] = c1;
        }
        s
    }

    pub fn coeff(&self, k: usize) -> T {
        self.0[k]
    }
}

impl<T: Real, const N: usize> Zero for Series<T, N> {
    fn zero() -> Self {
        Series([T::zero(); N])
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }
}

impl<T: Real, const N: usize> One for Series<T, N> {
    fn one() -> Self {
        Self::constant(T::one())
    }
}

impl<T: Real, const N: usize> Add for Series<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o = *o + r;
        }
        Series(out)
    }
}

impl<T: Real, const N: usize> Sub for Series<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o = *o - r;
        }
        Series(out)
    }
}

impl<T: Real, const N: usize> Neg for Series<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        Series(self.0.map(|c| -c))
    }
}

impl<T: Real, const N: usize> Mul for Series<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [T::zero(); N];
        for i in 0..N {
            for j in 0..N - i {
                out[i + j] = out[i + j] + self.0[i] * rhs.0[j];
            }
        }
        Series(out)
    }
}

impl<T: Real, const N: usize> Div for Series<T, N> {
    type Output = Self;
    /// Power-series division; the divisor must have a nonzero constant term.
    fn div(self, rhs: Self) -> Self {
        let mut out = [T::zero(); N];
        for k in 0..N {
            let mut acc = self.0[k];
            for j in 1..=k {
                acc = acc - rhs.0[j] * out[k - j];
            }
            out[k] = acc / rhs.0[0];
        }
        Series(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type S3 = Series<f64, 3>;

    #[test]
    fn series_product_truncates() {
        // (1 + t)(1 - t + t^2) = 1 + t^3 -> truncated to 1
        let a = S3::linear(1.0, 1.0);
        let b = Series([1.0, -1.0, 1.0]);
        assert_eq!((a * b).0, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn series_division_inverts_product() {
        let a = Series([2.0, 0.5, -1.0]);
        let b = Series([3.0, -2.0, 0.25]);
        let q = (a * b) / b;
        for k in 0..3 {
            assert!((q.0[k] - a.0[k]).abs() < 1e-14);
        }
        // 1/(1-t) = 1 + t + t^2
        assert_eq!((S3::one() / S3::linear(1.0, -1.0)).0, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn field_helpers() {
        assert_eq!(f64::two(), 2.0);
        assert_eq!(f32::half(), 0.5);
        assert_eq!(S3::two().0, [2.0, 0.0, 0.0]);
    }
}
