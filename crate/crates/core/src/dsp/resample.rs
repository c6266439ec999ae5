use crate::Real;

/// Blackman-windowed sinc low-pass with unit DC gain.
pub fn design_lowpass(taps: usize, cutoff_hz: f64, sample_rate: f64) -> Vec<f64> {
    let fc = cutoff_hz / sample_rate;
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
            };
            let x = 2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64;
            let w = 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos();
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Streaming anti-alias filter plus integer decimation.
///
/// Used to bring the microphone and far-end streams down to 8 kHz for the
/// delay estimator: factor 2 from 16 kHz (32 taps), factor 6 from 48 kHz
/// (96 taps). Both use a 3.6 kHz cutoff.
pub struct Decimator<T: Real> {
    factor: usize,
    taps: Vec<T>,
    history: Vec<T>,
}

impl<T: Real> Decimator<T> {
    pub fn new(factor: usize, taps: &[f64]) -> Self {
        Self {
            factor,
            taps: taps.iter().rev().map(|&v| T::lit(v)).collect(),
            history: vec![T::zero(); taps.len() - 1],
        }
    }

    /// Decimator from `sample_rate` down to 8 kHz.
    pub fn to_8k(sample_rate: u32) -> Self {
        let factor = (sample_rate / 8000) as usize;
        let taps = 16 * factor;
        Self::new(factor, &design_lowpass(taps, 3600.0, sample_rate as f64))
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    /// Group delay in input samples.
    pub fn delay(&self) -> f64 {
        (self.taps.len() - 1) as f64 / 2.0
    }

    /// `input.len()` must be a multiple of the decimation factor.
    pub fn process(&mut self, input: &[T]) -> Vec<T> {
        debug_assert_eq!(input.len() % self.factor, 0);
        let n_taps = self.taps.len();
        let mut buf = Vec::with_capacity(self.history.len() + input.len());
        buf.extend_from_slice(&self.history);
        buf.extend_from_slice(input);
        let out: Vec<T> = (0..input.len() / self.factor)
            .map(|m| {
                // newest input sample used is index (m+1)*factor - 1 of `input`
                let end = self.history.len() + (m + 1) * self.factor;
                buf[end - n_taps..end]
                    .iter()
                    .zip(&self.taps)
                    .fold(T::zero(), |acc, (&x, &h)| acc + x * h)
            })
            .collect();
        let keep = self.history.len();
        self.history.copy_from_slice(&buf[buf.len() - keep..]);
        out
    }
}
