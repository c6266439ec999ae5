use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::Real;

/// Power-complementary (Vorbis) window of length `2 * hop`.
///
/// `w[n]^2 + w[n + hop]^2 == 1`, so applying it at analysis and synthesis
/// with 50% overlap reconstructs the input.
pub fn power_complementary_window<T: Real>(hop: usize) -> Vec<T> {
    let n = 2 * hop;
    (0..n)
        .map(|i| {
            let s = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
            T::lit((std::f64::consts::FRAC_PI_2 * s * s).sin())
        })
        .collect()
}

/// One-sided spectrum of a single analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame<T> {
    pub bins: Vec<Complex<T>>,
    pub index: u64,
}

impl<T: Real> SpectralFrame<T> {
    pub fn zeros(n_bins: usize) -> Self {
        Self {
            bins: vec![Complex::new(T::zero(), T::zero()); n_bins],
            index: 0,
        }
    }

    /// Energy of the full (two-sided) spectrum. With the unitary scaling used by
    /// [`Analyzer`] this equals the energy of the windowed time frame.
    pub fn energy(&self) -> T {
        let n = self.bins.len();
        let mut acc = T::zero();
        for (k, b) in self.bins.iter().enumerate() {
            let p = b.norm_sqr();
            if k == 0 || k + 1 == n {
                acc += p;
            } else {
                acc += p + p;
            }
        }
        acc
    }
}

struct Transform<T: Real> {
    window_len: usize,
    forward: Arc<dyn RealToComplex<T>>,
    inverse: Arc<dyn ComplexToReal<T>>,
    time: Vec<T>,
    freq: Vec<Complex<T>>,
    scratch_fwd: Vec<Complex<T>>,
    scratch_inv: Vec<Complex<T>>,
    norm: T,
}

impl<T: Real> Transform<T> {
    fn new(window_len: usize) -> Self {
        let mut planner = RealFftPlanner::<T>::new();
        let forward = planner.plan_fft_forward(window_len);
        let inverse = planner.plan_fft_inverse(window_len);
        let scratch_fwd = forward.make_scratch_vec();
        let scratch_inv = inverse.make_scratch_vec();
        Self {
            window_len,
            time: forward.make_input_vec(),
            freq: forward.make_output_vec(),
            forward,
            inverse,
            scratch_fwd,
            scratch_inv,
            norm: T::one() / T::from_len(window_len).sqrt(),
        }
    }

    fn forward(&mut self, input: &[T], out: &mut Vec<Complex<T>>) {
        self.time.copy_from_slice(input);
        self.forward
            .process_with_scratch(&mut self.time, &mut self.freq, &mut self.scratch_fwd)
            .expect("fft sizes are fixed at construction");
        out.clear();
        out.extend(self.freq.iter().map(|c| c * self.norm));
    }

    fn inverse(&mut self, input: &[Complex<T>], out: &mut [T]) {
        self.freq.copy_from_slice(input);
        let last = self.freq.len() - 1;
        self.freq[0].im = T::zero();
        self.freq[last].im = T::zero();
        self.inverse
            .process_with_scratch(&mut self.freq, &mut self.time, &mut self.scratch_inv)
            .expect("fft sizes are fixed at construction");
        for (o, &t) in out.iter_mut().zip(self.time.iter()) {
            *o = t * self.norm;
        }
    }
}

/// Streaming analysis: window `[previous hop | current hop]` and transform.
pub struct Analyzer<T: Real> {
    hop: usize,
    window: Vec<T>,
    history: Vec<T>,
    buf: Vec<T>,
    transform: Transform<T>,
    frame_index: u64,
}

impl<T: Real> Analyzer<T> {
    pub fn new(hop: usize) -> Self {
        Self {
            hop,
            window: power_complementary_window(hop),
            history: vec![T::zero(); hop],
            buf: vec![T::zero(); 2 * hop],
            transform: Transform::new(2 * hop),
            frame_index: 0,
        }
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window_len(&self) -> usize {
        2 * self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.hop + 1
    }

    pub fn analyze(&mut self, frame: &[T]) -> Result<SpectralFrame<T>> {
        if frame.len() != self.hop {
            return Err(Error::FrameLength {
                expected: self.hop,
                found: frame.len(),
            });
        }
        let hop = self.hop;
        self.buf[..hop].copy_from_slice(&self.history);
        self.buf[hop..].copy_from_slice(frame);
        self.history.copy_from_slice(frame);
        let mut spec = SpectralFrame {
            bins: Vec::with_capacity(hop + 1),
            index: self.frame_index,
        };
        for (b, &w) in self.buf.iter_mut().zip(self.window.iter()) {
            *b *= w;
        }
        self.transform.forward(&self.buf, &mut spec.bins);
        self.frame_index += 1;
        Ok(spec)
    }

    /// Transforms a complete `2 * hop` window without touching the stream
    /// history. Used for signals synthesized per frame (the comb filter).
    pub fn analyze_window(&mut self, samples: &[T]) -> Result<SpectralFrame<T>> {
        if samples.len() != 2 * self.hop {
            return Err(Error::FrameLength {
                expected: 2 * self.hop,
                found: samples.len(),
            });
        }
        for ((b, &s), &w) in self.buf.iter_mut().zip(samples).zip(self.window.iter()) {
            *b = s * w;
        }
        let mut spec = SpectralFrame {
            bins: Vec::with_capacity(self.hop + 1),
            index: 0,
        };
        self.transform.forward(&self.buf, &mut spec.bins);
        Ok(spec)
    }
}

/// Streaming synthesis: inverse transform, window, overlap-add.
pub struct Synthesizer<T: Real> {
    hop: usize,
    window: Vec<T>,
    overlap: Vec<T>,
    buf: Vec<T>,
    transform: Transform<T>,
}

impl<T: Real> Synthesizer<T> {
    pub fn new(hop: usize) -> Self {
        Self {
            hop,
            window: power_complementary_window(hop),
            overlap: vec![T::zero(); hop],
            buf: vec![T::zero(); 2 * hop],
            transform: Transform::new(2 * hop),
        }
    }

    pub fn synthesize(&mut self, spec: &SpectralFrame<T>) -> Result<Vec<T>> {
        if spec.bins.len() != self.hop + 1 {
            return Err(Error::SpectrumSize {
                expected: self.hop + 1,
                found: spec.bins.len(),
            });
        }
        debug_assert_eq!(self.transform.window_len, 2 * self.hop);
        self.transform.inverse(&spec.bins, &mut self.buf);
        let hop = self.hop;
        let mut out = Vec::with_capacity(hop);
        for i in 0..hop {
            out.push(self.overlap[i] + self.buf[i] * self.window[i]);
            self.overlap[i] = self.buf[hop + i] * self.window[hop + i];
        }
        Ok(out)
    }
}
