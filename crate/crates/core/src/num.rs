//! Scalar abstraction shared by the signal-processing modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar that baseband samples are built from.
///
/// Implemented for `f32` and `f64`. Physical configuration (frequencies,
/// durations) is always carried in `f64`; only sample data and the math
/// applied to it is generic.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable in every Real")
    }

    /// Widening conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Real always widens to f64")
    }

    /// Unit phasor `exp(j·phase)` evaluated in `f64` and then narrowed.
    #[inline]
    fn cis(phase: f64) -> Complex<Self> {
        let (s, c) = phase.sin_cos();
        Complex::new(Self::of(c), Self::of(s))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi<T: Real>(angle: T) -> T {
    let tau = T::TAU();
    let r = angle % tau;
    let r = if r < T::zero() { r + tau } else { r };
    // `r + tau` can round up to exactly tau for tiny negative inputs.
    if r >= tau {
        T::zero()
    } else {
        r
    }
}

/// Decibels to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn wrap_keeps_range() {
        assert_eq!(wrap_two_pi(0.0f64), 0.0);
        assert!((wrap_two_pi(-PI / 2.0) - 1.5 * PI).abs() < 1e-15);
        assert!((wrap_two_pi(5.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_two_pi(TAU), 0.0);
        assert_eq!(wrap_two_pi(-1e-20f64), 0.0);
        let w = wrap_two_pi(-1e-7f32);
        assert!((0.0..std::f32::consts::TAU).contains(&w));
    }

    #[test]
    fn db_round_trip() {
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(-3.7)) + 3.7).abs() < 1e-12);
    }
}
