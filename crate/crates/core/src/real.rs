//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Scalar type usable by the tensors, transforms and the tape.
///
/// Implemented for `f32` (training / evaluation) and `f64` (gradient checks
/// and the transform theorem suites).
pub trait Real:
    Float + FftNum + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Width of the type in bits, echoed into checkpoints and reports.
    const BITS: u32;

    fn erf(self) -> Self;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const BITS: u32 = 32;

    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Real for f64 {
    const BITS: u32 = 64;

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
