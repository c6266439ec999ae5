//! Far-end to microphone delay estimation and compensation.

use log::warn;

use crate::aec::{AecConfig, EchoCanceller, Path};
use crate::dsp::Decimator;
use crate::{Error, Real, Result};

/// Rate the secondary filter runs at.
pub const ESTIMATOR_RATE: u32 = 8000;

/// Integer-sample delay line with a fixed capacity.
#[derive(Debug, Clone)]
pub struct DelayLine<T> {
    buf: Vec<T>,
    pos: usize,
    clamped: bool,
}

impl<T: Real> DelayLine<T> {
    /// `capacity` is the largest delay, in samples, that can be applied.
    pub fn new(capacity: usize) -> Self {
        Self {
            buf: vec![T::zero(); capacity + 1],
            pos: 0,
            clamped: false,
        }
    }

    pub fn capacity(&self) -> usize {
        self.buf.len() - 1
    }

    /// True if the most recent call had to clamp the requested delay.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    /// Pushes `frame` and returns it delayed by `delay` samples.
    pub fn process(&mut self, frame: &[T], delay: usize) -> Vec<T> {
        let cap = self.capacity();
        self.clamped = delay > cap;
        if self.clamped {
            warn!("delay of {delay} samples exceeds line capacity {cap}; clamped");
        }
        let d = delay.min(cap);
        let len = self.buf.len();
        let mut out = Vec::with_capacity(frame.len());
        for &x in frame {
            self.buf[self.pos] = x;
            out.push(self.buf[(self.pos + len - d) % len]);
            self.pos = (self.pos + 1) % len;
        }
        out
    }
}

/// Estimates the echo delay with a long adaptive filter at 8 kHz.
///
/// The estimate only moves when a new peak has beaten the magnitude at the
/// current delay by 6 dB for `hold_frames` consecutive frames.
pub struct DelayEstimator<T: Real> {
    factor: usize,
    mic_down: Decimator<T>,
    far_down: Decimator<T>,
    filter: EchoCanceller<T>,
    smoothed: Vec<T>,
    alpha: T,
    hold_frames: u32,
    count: u32,
    delay: usize,
    line: DelayLine<T>,
    switches: u32,
}

impl<T: Real> DelayEstimator<T> {
    pub fn new(sample_rate: u32) -> Result<Self> {
        if sample_rate % ESTIMATOR_RATE != 0 || sample_rate < ESTIMATOR_RATE * 2 {
            return Err(Error::Config(format!(
                "delay estimation needs a multiple of 16 kHz, got {sample_rate}"
            )));
        }
        let factor = (sample_rate / ESTIMATOR_RATE) as usize;
        let config = AecConfig {
            block_len: (ESTIMATOR_RATE / 100) as usize,
            n_blocks: 40,
            pnlms: false,
            two_path: false,
            ..AecConfig::for_rate(ESTIMATOR_RATE)
        };
        let taps = config.filter_len();
        Ok(Self {
            factor,
            mic_down: Decimator::to_8k(sample_rate),
            far_down: Decimator::to_8k(sample_rate),
            filter: EchoCanceller::new(config)?,
            smoothed: vec![T::zero(); taps],
            alpha: T::lit(0.95),
            hold_frames: 50,
            count: 0,
            delay: 0,
            line: DelayLine::new(sample_rate as usize / 2),
            switches: 0,
        })
    }

    /// Current delay estimate in input-rate samples.
    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn delay_ms(&self) -> f64 {
        self.delay as f64 * 1000.0 / (self.factor as f64 * ESTIMATOR_RATE as f64)
    }

    pub fn switches(&self) -> u32 {
        self.switches
    }

    /// Smoothed tap magnitudes of the 8 kHz filter.
    pub fn tap_magnitudes(&self) -> &[T] {
        &self.smoothed
    }

    pub fn line_capacity(&self) -> usize {
        self.line.capacity()
    }

    /// True if the last delayed frame needed its delay clamped.
    pub fn clamped(&self) -> bool {
        self.line.clamped()
    }

    /// Adapts the secondary filter on one input-rate frame pair and returns
    /// the (possibly updated) delay.
    pub fn update(&mut self, mic: &[T], far: &[T]) -> Result<usize> {
        let m = self.mic_down.process(mic);
        let f = self.far_down.process(far);
        self.filter.process_frame(&m, &f)?;
        let taps = self.filter.filter_mut().impulse_response(Path::Background);
        let a = self.alpha;
        for (s, t) in self.smoothed.iter_mut().zip(&taps) {
            *s = a * *s + (T::one() - a) * t.abs();
        }
        let (best, peak) = self
            .smoothed
            .iter()
            .enumerate()
            .fold((0, T::zero()), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let current = (self.delay / self.factor).min(self.smoothed.len() - 1);
        if best != current && peak > (self.smoothed[current] + self.smoothed[current]) {
            self.count += 1;
            if self.count >= self.hold_frames {
                self.delay = best * self.factor;
                self.count = 0;
                self.switches += 1;
            }
        } else {
            self.count = 0;
        }
        Ok(self.delay)
    }

    /// The far-end frame delayed by the current estimate.
    pub fn delayed_far(&mut self, far: &[T]) -> Vec<T> {
        self.line.process(far, self.delay)
    }

    /// The far-end frame delayed by an explicit amount.
    pub fn delayed_far_by(&mut self, far: &[T], delay: usize) -> Vec<T> {
        self.line.process(far, delay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delay_is_identity() {
        let mut line = DelayLine::<f32>::new(100);
        let x: Vec<f32> = (0..50).map(|i| i as f32).collect();
        assert_eq!(line.process(&x, 0), x);
    }

    #[test]
    fn impulse_appears_exactly_delay_samples_later() {
        let mut line = DelayLine::<f64>::new(8000);
        let mut out = Vec::new();
        for t in 0..4 {
            let mut frame = vec![0.0; 160];
            if t == 0 {
                frame[3] = 1.0;
            }
            out.extend(line.process(&frame, 160));
        }
        let pos: Vec<usize> = (0..out.len()).filter(|&i| out[i] != 0.0).collect();
        assert_eq!(pos, vec![163]);
    }

    #[test]
    fn delay_change_only_shifts() {
        let mut line = DelayLine::<f64>::new(1000);
        let x: Vec<f64> = (0..3200).map(|i| i as f64).collect();
        let mut out = Vec::new();
        for (t, frame) in x.chunks(160).enumerate() {
            let d = if t < 10 { 100 } else { 250 };
            out.extend(line.process(frame, d));
        }
        for (n, &y) in out.iter().enumerate() {
            let d = if n < 1600 { 100 } else { 250 };
            let expect = if n >= d { (n - d) as f64 } else { 0.0 };
            assert_eq!(y, expect, "sample {n}");
        }
    }

    #[test]
    fn excessive_delay_is_clamped() {
        let mut line = DelayLine::<f32>::new(10);
        let mut out = Vec::new();
        let mut frame = vec![0.0; 20];
        frame[0] = 1.0;
        out.extend(line.process(&frame, 50));
        assert!(line.clamped());
        assert_eq!(out[10], 1.0);
        line.process(&frame, 5);
        assert!(!line.clamped());
    }

    #[test]
    fn silent_far_end_keeps_initial_delay() {
        let mut est = DelayEstimator::<f32>::new(16000).unwrap();
        let mic: Vec<f32> = (0..160).map(|i| ((i * 37) % 11) as f32 * 0.01).collect();
        let zeros = vec![0.0; 160];
        for _ in 0..100 {
            assert_eq!(est.update(&mic, &zeros).unwrap(), 0);
        }
        assert!(est.line_capacity() >= 8000);
    }
}
