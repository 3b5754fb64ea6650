//! Real scalar abstraction: every numeric module is generic over `T: Real`
//! so the same receiver code runs in `f32` or `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating-point scalar underlying all complex arithmetic in this crate.
///
/// The bound set is what the receiver chain actually needs: ordinary float
/// arithmetic plus constants (`PI`), conversions from literals, iterator
/// sums, FFT support, and printable output. Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + rustfft::FftNum
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for algorithm constants and
    /// configuration values (which are stored as `f64`).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }
}

impl Real for f32 {}
impl Real for f64 {}
