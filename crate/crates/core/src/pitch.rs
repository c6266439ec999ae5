//! Pitch tracking, the look-ahead comb filter and per-band pitch coherence.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::dsp::{BandLayout, BandVector};
use crate::{Error, Real, Result};

/// Comb taps for `k = -2..=2`, applied as `c(n) = sum_k w_k y(n - kT)`.
pub const COMB_KERNEL: [f64; 5] = [0.0625, 0.25, 0.375, 0.25, 0.0625];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate<T> {
    pub period: usize,
    pub correlation: T,
}

/// Normalized cross-correlation pitch search with a continuity bias.
pub struct PitchTracker<T: Real> {
    min_period: usize,
    max_period: usize,
    window: usize,
    continuity: f64,
    octave_ratio: f64,
    period: usize,
    has_prev: bool,
    correlation: T,
    planner: RealFftPlanner<T>,
    plan: Option<(usize, Arc<dyn RealToComplex<T>>, Arc<dyn ComplexToReal<T>>)>,
    norms: Vec<T>,
}

impl<T: Real> PitchTracker<T> {
    /// Search range of 62.5 to 500 Hz; the correlation window is the newest
    /// `window` samples of the history passed to [`search`](Self::search).
    pub fn new(sample_rate: u32, window: usize) -> Self {
        let scale = (sample_rate / 16000).max(1) as usize;
        let min_period = 32 * scale;
        Self {
            min_period,
            max_period: 256 * scale,
            window,
            continuity: 0.85,
            octave_ratio: 0.9,
            period: min_period,
            has_prev: false,
            correlation: T::zero(),
            planner: RealFftPlanner::new(),
            plan: None,
            norms: Vec::new(),
        }
    }

    pub fn min_period(&self) -> usize {
        self.min_period
    }

    pub fn max_period(&self) -> usize {
        self.max_period
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn correlation(&self) -> T {
        self.correlation
    }

    /// Period mapped linearly from the search range onto `[0, 1]`.
    pub fn normalized_period(&self, period: usize) -> T {
        T::from_len(period.saturating_sub(self.min_period))
            / T::from_len(self.max_period - self.min_period)
    }

    /// Samples of history [`search`](Self::search) needs.
    pub fn required_history(&self) -> usize {
        self.window + self.max_period
    }

    /// Normalized correlation between the newest window and the window
    /// `lag` samples earlier, for every lag in `0..=max_period`.
    fn correlations(&mut self, history: &[T]) -> Vec<T> {
        let len = history.len();
        let w = self.window;
        let n_fft = len.next_power_of_two();
        if self.plan.as_ref().map(|p| p.0) != Some(n_fft) {
            let f = self.planner.plan_fft_forward(n_fft);
            let i = self.planner.plan_fft_inverse(n_fft);
            self.plan = Some((n_fft, f, i));
        }
        let (_, fwd, inv) = self.plan.as_ref().unwrap();
        let mut a = vec![T::zero(); n_fft];
        a[..len].copy_from_slice(history);
        let mut b = vec![T::zero(); n_fft];
        b[..w].copy_from_slice(&history[len - w..]);
        let mut fa = fwd.make_output_vec();
        let mut fb = fwd.make_output_vec();
        fwd.process(&mut a, &mut fa).expect("planned size");
        fwd.process(&mut b, &mut fb).expect("planned size");
        let mut prod: Vec<Complex<T>> = fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect();
        let last = prod.len() - 1;
        prod[0].im = T::zero();
        prod[last].im = T::zero();
        let mut xc = vec![T::zero(); n_fft];
        inv.process(&mut prod, &mut xc).expect("planned size");
        let scale = T::one() / T::from_len(n_fft);

        // energies of every length-w window via prefix sums
        self.norms.clear();
        self.norms.push(T::zero());
        for &v in history {
            let prev = *self.norms.last().unwrap();
            self.norms.push(prev + v * v);
        }
        let seg_start = len - w;
        let e0 = self.norms[len] - self.norms[seg_start];
        (0..=self.max_period)
            .map(|lag| {
                let k = seg_start - lag;
                let el = self.norms[k + w] - self.norms[k];
                let den = (e0 * el).sqrt();
                if den > T::zero() {
                    (xc[k] * scale / den).max(-T::one()).min(T::one())
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// Searches the newest `window` samples of `history` for a period.
    ///
    /// On silence the previous period is kept and the correlation is zero.
    pub fn search(&mut self, history: &[T]) -> Result<PitchEstimate<T>> {
        if history.len() < self.required_history() {
            return Err(Error::Config(format!(
                "pitch history of {} samples, need {}",
                history.len(),
                self.required_history()
            )));
        }
        let seg = &history[history.len() - self.window..];
        let energy = seg.iter().fold(T::zero(), |a, &v| a + v * v);
        if energy <= T::lit(1e-9) * T::from_len(self.window) {
            self.correlation = T::zero();
            return Ok(PitchEstimate { period: self.period, correlation: T::zero() });
        }
        let r = self.correlations(history);
        let prev = self.period as f64;
        let mut best = self.min_period;
        let mut best_score = f64::NEG_INFINITY;
        for lag in self.min_period..=self.max_period {
            let mut score = r[lag].to_f64_lossy();
            if self.has_prev && score > 0.0 {
                score *= self.continuity.powf((lag as f64 / prev).log2().abs());
            }
            if score > best_score {
                best_score = score;
                best = lag;
            }
        }
        // prefer the shortest period that explains the signal equally well
        loop {
            let threshold = self.octave_ratio * r[best].to_f64_lossy();
            let sub = [2usize, 3]
                .iter()
                .map(|&d| (best + d / 2) / d)
                .find(|&c| c >= self.min_period && r[c].to_f64_lossy() >= threshold && threshold > 0.0);
            match sub {
                Some(c) => best = c,
                None => break,
            }
        }
        self.period = best;
        self.has_prev = true;
        self.correlation = r[best];
        Ok(PitchEstimate { period: best, correlation: r[best] })
    }
}

/// Normalized correlation of `x[start..start+len]` with the same span
/// `lag` samples earlier. Returns zero for a silent span.
pub fn lag_correlation<T: Real>(x: &[T], start: usize, len: usize, lag: usize) -> T {
    let (mut xy, mut xx, mut yy) = (T::zero(), T::zero(), T::zero());
    for n in start..start + len {
        let a = x[n];
        let b = x[n - lag];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let den = (xx * yy).sqrt();
    if den > T::zero() {
        xy / den
    } else {
        T::zero()
    }
}

/// Comb-filters `buf[start..start + len]` with period `period`.
///
/// Taps that would read outside `buf` for any sample of the span are
/// dropped for the whole span and the remaining weights rescaled to sum to
/// one, so the filter stays time-invariant within a frame.
pub fn comb_filter<T: Real>(buf: &[T], start: usize, len: usize, period: usize) -> Vec<T> {
    assert!(start + len <= buf.len());
    let mut taps: Vec<(isize, T)> = Vec::with_capacity(5);
    let mut total = 0.0;
    for (i, &w) in COMB_KERNEL.iter().enumerate() {
        let k = i as isize - 2;
        let first = start as isize - k * period as isize;
        let last = first + len as isize - 1;
        if first >= 0 && (last as usize) < buf.len() {
            taps.push((-k * period as isize, T::lit(w)));
            total += w;
        }
    }
    let norm = T::lit(1.0 / total);
    (start..start + len)
        .map(|n| {
            taps.iter()
                .fold(T::zero(), |acc, &(off, w)| acc + w * buf[(n as isize + off) as usize])
                * norm
        })
        .collect()
}

/// Per-band coherence `Re<Y, C>_b / sqrt(E_b(Y) E_b(C))`, clamped to
/// `[0, 1]`; zero where either band is silent.
pub fn band_coherence<T: Real>(
    y: &[Complex<T>],
    c: &[Complex<T>],
    layout: &BandLayout<T>,
) -> Result<BandVector<T>> {
    let ey = layout.band_energies(y)?;
    let ec = layout.band_energies(c)?;
    let xy = layout.band_cross(y, c)?;
    Ok((0..ey.len())
        .map(|b| {
            let den = (ey[b] * ec[b]).sqrt();
            if den > T::zero() {
                (xy[b] / den).max(T::zero()).min(T::one())
            } else {
                T::zero()
            }
        })
        .collect())
}

/// Fixed-length sample history, oldest first.
#[derive(Debug, Clone)]
pub struct History<T> {
    buf: Vec<T>,
}

impl<T: Real> History<T> {
    pub fn new(len: usize) -> Self {
        Self { buf: vec![T::zero(); len] }
    }

    pub fn push(&mut self, frame: &[T]) {
        let n = frame.len().min(self.buf.len());
        self.buf.rotate_left(n);
        let len = self.buf.len();
        self.buf[len - n..].copy_from_slice(&frame[frame.len() - n..]);
    }

    pub fn as_slice(&self) -> &[T] {
        &self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}
