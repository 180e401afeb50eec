//! Scalar abstraction over the floating-point element type.
//!
//! Everything numeric in this crate (tensors, DSP, losses, metrics) is generic
//! over [`Scalar`] so the same code runs in `f32` for training/inference and in
//! `f64` for finite-difference gradient verification. Concrete aliases live at
//! the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point element type usable throughout the crate.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn from64(v: f64) -> Self;

    /// Widening conversion to `f64` (always exact).
    fn to64(self) -> f64;

    /// Gauss error function, used by the exact GELU.
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to64(self) -> f64 {
        self
    }

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_matches_known_values() {
        assert!((<f64 as Scalar>::erf(0.0)).abs() < 1e-15);
        // erf(1) = 0.8427007929497149
        assert!((<f64 as Scalar>::erf(1.0) - 0.8427007929497149).abs() < 1e-12);
        assert!((<f32 as Scalar>::erf(1.0) - 0.842_700_8).abs() < 1e-6);
    }

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::from64(0.5).to64(), 0.5);
        assert_eq!(f32::from64(0.5), 0.5f32);
    }
}
