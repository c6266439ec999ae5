use std::fmt::Debug;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

/// Sample type accepted by the signal-processing modules.
pub trait Real:
    Float + FloatConst + NumAssign + FftNum + Default + Debug + Send + Sync + 'static
{
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).unwrap()
    }

    #[inline]
    fn from_len(v: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(v).unwrap()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        num_traits::ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + NumAssign + FftNum + Default + Debug + Send + Sync + 'static
{
}
