//! The scalar abstraction all simulation code is written over.
//!
//! Two implementations exist: plain `f64` for fast forward evaluation, and
//! [`Var`](super::tape::Var) which records a replayable expression graph.
//! Generic code must never branch on [`Real::val`]; value-dependent choices go
//! through [`Real::select_le`], [`Real::max`] and [`Real::min`] so that a
//! recorded graph stays valid for every input.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Primitive evaluation rules shared by the `f64` implementation and graph replay,
/// so both paths produce bit-identical results.
pub(crate) mod prim {
    #[inline(always)]
    pub fn max(a: f64, b: f64) -> f64 {
        if a >= b {
            a
        } else {
            b
        }
    }

    #[inline(always)]
    pub fn min(a: f64, b: f64) -> f64 {
        if a <= b {
            a
        } else {
            b
        }
    }

    #[inline(always)]
    pub fn select_le(l: f64, r: f64, t: f64, f: f64) -> f64 {
        if l <= r {
            t
        } else {
            f
        }
    }
}

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// A value that does not depend on any input.
    fn cst(v: f64) -> Self;
    /// The numeric value carried by this scalar.
    fn val(self) -> f64;

    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn acos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    /// Four-quadrant arctangent of `self / x`.
    fn atan2(self, x: Self) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
    /// `if l <= r { t } else { f }`.
    fn select_le(l: Self, r: Self, t: Self, f: Self) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::cst(1.0)
    }

    #[inline]
    fn sq(self) -> Self {
        self * self
    }

    #[inline]
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }

    /// Square root with a zero subgradient at the origin and a finite value for
    /// tiny negative rounding noise.
    #[inline]
    fn safe_sqrt(self) -> Self {
        Self::select_le(self, Self::zero(), Self::zero(), self.sqrt())
    }
}

impl Real for f64 {
    #[inline(always)]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn val(self) -> f64 {
        self
    }
    #[inline(always)]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline(always)]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline(always)]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline(always)]
    fn acos(self) -> Self {
        f64::acos(self)
    }
    #[inline(always)]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline(always)]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline(always)]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline(always)]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline(always)]
    fn max(self, other: Self) -> Self {
        prim::max(self, other)
    }
    #[inline(always)]
    fn min(self, other: Self) -> Self {
        prim::min(self, other)
    }
    #[inline(always)]
    fn select_le(l: Self, r: Self, t: Self, f: Self) -> Self {
        prim::select_le(l, r, t, f)
    }
}
