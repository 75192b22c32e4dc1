//! Scalar abstraction for the numeric kernels.

use std::fmt::Display;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;
use rustfft::FftNum;

/// Floating-point scalar the simulation and estimation kernels are generic
/// over. Implemented for `f32` and `f64`.
pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + FftNum + Display {
    /// Converts an `f64` literal, panicking only for non-representable values
    /// (infinities round-trip, so this is total for finite constants).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in scalar type")
    }

    /// Lossy view as `f64`, used for error payloads and file output.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not convertible to f64")
    }

    /// Standard normal draw by the trigonometric Box-Muller transform.
    ///
    /// Exactly two uniform `f64` words are consumed per draw and the
    /// arithmetic runs in `f64` before the final cast, so a given RNG stream
    /// produces the same variate sequence for every scalar type.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let mag = (-2.0 * (1.0 - u1).ln()).sqrt();
        Self::lit(mag * (std::f64::consts::TAU * u2).cos())
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + NumAssign + Sum + FftNum + Display {}
