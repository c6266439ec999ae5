//! Windowed STFT, ERB band analysis and rate conversion.

mod bands;
mod resample;
mod stft;

pub use bands::{BandLayout, BandVector};
pub use resample::{design_lowpass, Decimator};
pub use stft::{power_complementary_window, Analyzer, SpectralFrame, Synthesizer};

use crate::Real;

/// Energy of a block of samples.
pub fn energy<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v)
}

pub(crate) fn all_finite<T: Real>(x: &[T]) -> bool {
    x.iter().all(|v| v.is_finite())
}
