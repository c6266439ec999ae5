use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::Real;

/// Which of the two filter copies an operation applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    Foreground,
    Background,
}

/// Multidelay block frequency-domain filter with foreground/background
/// copies.
///
/// A filter of `n_blocks * block_len` taps is split into `n_blocks`
/// partitions, each held as the spectrum of a `2 * block_len` FFT. The
/// output is computed by overlap-save: the last `block_len` samples of the
/// inverse transform of `sum_k W_k X_{t-k}`.
pub struct MdfFilter<T: Real> {
    block_len: usize,
    n_blocks: usize,
    n_bins: usize,
    forward: Arc<dyn RealToComplex<T>>,
    inverse: Arc<dyn ComplexToReal<T>>,
    far_prev: Vec<T>,
    far_hist: Vec<Vec<Complex<T>>>,
    newest: usize,
    background: Vec<Vec<Complex<T>>>,
    foreground: Vec<Vec<Complex<T>>>,
    block_energy: Vec<T>,
    rotation: usize,
    far_power: Vec<T>,
    power_frames: u64,
    time: Vec<T>,
    freq: Vec<Complex<T>>,
    acc: Vec<Complex<T>>,
    scratch_fwd: Vec<Complex<T>>,
    scratch_inv: Vec<Complex<T>>,
}

impl<T: Real> MdfFilter<T> {
    pub fn new(block_len: usize, n_blocks: usize) -> Self {
        assert!(block_len > 0 && n_blocks > 0);
        let n = 2 * block_len;
        let mut planner = RealFftPlanner::<T>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let n_bins = block_len + 1;
        let zeros = vec![Complex::new(T::zero(), T::zero()); n_bins];
        Self {
            block_len,
            n_blocks,
            n_bins,
            scratch_fwd: forward.make_scratch_vec(),
            scratch_inv: inverse.make_scratch_vec(),
            forward,
            inverse,
            far_prev: vec![T::zero(); block_len],
            far_hist: vec![zeros.clone(); n_blocks],
            newest: 0,
            background: vec![zeros.clone(); n_blocks],
            foreground: vec![zeros.clone(); n_blocks],
            block_energy: vec![T::zero(); n_blocks],
            rotation: 0,
            far_power: vec![T::zero(); n_bins],
            power_frames: 0,
            time: vec![T::zero(); n],
            freq: zeros.clone(),
            acc: zeros,
        }
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn fft_len(&self) -> usize {
        2 * self.block_len
    }

    pub fn rotation(&self) -> usize {
        self.rotation
    }

    pub fn block_energies(&self) -> &[T] {
        &self.block_energy
    }

    pub fn weights(&self, path: Path) -> &[Vec<Complex<T>>] {
        match path {
            Path::Foreground => &self.foreground,
            Path::Background => &self.background,
        }
    }

    pub fn weights_mut(&mut self, path: Path) -> &mut [Vec<Complex<T>>] {
        match path {
            Path::Foreground => &mut self.foreground,
            Path::Background => &mut self.background,
        }
    }

    /// Spectrum of the far-end frame `delay` blocks ago (0 = newest).
    pub fn far_spectrum(&self, delay: usize) -> &[Complex<T>] {
        &self.far_hist[(self.newest + self.n_blocks - delay) % self.n_blocks]
    }

    /// Smoothed per-bin far-end power used for step normalization.
    pub fn far_power(&self) -> &[T] {
        &self.far_power
    }

    /// Per-bin far-end power averaged over the blocks spanned by the filter.
    pub fn span_power(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_bins];
        for x in &self.far_hist {
            for (o, c) in out.iter_mut().zip(x) {
                *o += c.norm_sqr();
            }
        }
        let k = T::from_len(self.n_blocks);
        out.iter_mut().for_each(|v| *v /= k);
        out
    }

    /// Unnormalized real FFT of `input` (length `2 * block_len`).
    pub fn fft(&mut self, input: &[T], out: &mut [Complex<T>]) {
        self.time.copy_from_slice(input);
        self.forward
            .process_with_scratch(&mut self.time, out, &mut self.scratch_fwd)
            .expect("fixed fft size");
    }

    /// Unnormalized inverse real FFT (result is scaled by the FFT length).
    fn ifft(&mut self, input: &[Complex<T>], out: &mut [T]) {
        self.freq.copy_from_slice(input);
        let last = self.n_bins - 1;
        self.freq[0].im = T::zero();
        self.freq[last].im = T::zero();
        self.inverse
            .process_with_scratch(&mut self.freq, out, &mut self.scratch_inv)
            .expect("fixed fft size");
    }

    /// Spectrum of `[0; block_len] ++ frame`, the layout of error and
    /// microphone blocks in overlap-save.
    pub fn padded_spectrum(&mut self, frame: &[T]) -> Vec<Complex<T>> {
        let b = self.block_len;
        let mut buf = vec![T::zero(); 2 * b];
        buf[b..].copy_from_slice(frame);
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.n_bins];
        self.fft(&buf, &mut out);
        out
    }

    /// Shifts a new far-end frame into the block history.
    pub fn push_far(&mut self, far: &[T]) {
        let b = self.block_len;
        let mut buf = vec![T::zero(); 2 * b];
        buf[..b].copy_from_slice(&self.far_prev);
        buf[b..].copy_from_slice(far);
        self.far_prev.copy_from_slice(far);
        self.newest = (self.newest + 1) % self.n_blocks;
        let mut spec = std::mem::take(&mut self.far_hist[self.newest]);
        self.fft(&buf, &mut spec);
        self.far_hist[self.newest] = spec;
    }

    /// Updates the smoothed far-end power from the newest far-end spectrum.
    pub fn update_far_power(&mut self) {
        let base = T::lit(0.35) / T::from_len(self.n_blocks);
        self.power_frames += 1;
        let a = base.max(T::one() / T::from_len(self.power_frames as usize));
        let newest = self.newest;
        for (p, x) in self.far_power.iter_mut().zip(&self.far_hist[newest]) {
            *p = (T::one() - a) * *p + a * x.norm_sqr();
        }
    }

    /// Echo estimate for the newest frame (`block_len` samples).
    pub fn output(&mut self, path: Path) -> Vec<T> {
        let n_bins = self.n_bins;
        let mut acc = std::mem::take(&mut self.acc);
        acc.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
        {
            let weights = match path {
                Path::Foreground => &self.foreground,
                Path::Background => &self.background,
            };
            for (k, w) in weights.iter().enumerate() {
                let x = &self.far_hist[(self.newest + self.n_blocks - k) % self.n_blocks];
                for i in 0..n_bins {
                    acc[i] += w[i] * x[i];
                }
            }
        }
        let mut time = vec![T::zero(); 2 * self.block_len];
        self.ifft(&acc, &mut time);
        self.acc = acc;
        let scale = T::one() / T::from_len(2 * self.block_len);
        time[self.block_len..].iter().map(|&v| v * scale).collect()
    }

    /// Block-proportionate step multipliers, normalized to sum to `n_blocks`.
    ///
    /// `m_k = ||W_k||`; `mult_k ∝ max(rho * max_j m_j, m_k)`. An all-zero
    /// filter yields uniform multipliers.
    pub fn pnlms_block_scale(&self, rho: T) -> Vec<T> {
        let k = T::from_len(self.n_blocks);
        let mags: Vec<T> = self.block_energy.iter().map(|e| e.sqrt()).collect();
        let max = mags.iter().fold(T::zero(), |m, &v| m.max(v));
        if max <= T::zero() {
            return vec![T::one(); self.n_blocks];
        }
        let floor = rho * max;
        let raw: Vec<T> = mags.iter().map(|&m| m.max(floor)).collect();
        let sum = raw.iter().fold(T::zero(), |a, &v| a + v);
        raw.into_iter().map(|v| k * v / sum).collect()
    }

    /// Normalized block gradient step on the background filter.
    ///
    /// `error_spec` is the spectrum of `[0 | e]`; `multipliers` are the
    /// per-block step scales (mean 1).
    pub fn adapt(&mut self, error_spec: &[Complex<T>], mu: T, multipliers: &[T]) {
        let mean = self.far_power.iter().fold(T::zero(), |a, &p| a + p)
            / T::from_len(self.n_bins);
        let floor = T::lit(1e-6) * mean;
        let abs_floor = T::lit(1e-10);
        let inv: Vec<T> = self
            .far_power
            .iter()
            .map(|&p| T::one() / (p.max(floor) + abs_floor))
            .collect();
        let base = (mu + mu) / T::from_len(self.n_blocks);
        for k in 0..self.n_blocks {
            let step = base * multipliers[k];
            if step == T::zero() {
                continue;
            }
            let xi = (self.newest + self.n_blocks - k) % self.n_blocks;
            let x = &self.far_hist[xi];
            let w = &mut self.background[k];
            for i in 0..self.n_bins {
                w[i] += x[i].conj() * error_spec[i] * (step * inv[i]);
            }
        }
        self.refresh_energies();
    }

    pub fn refresh_energies(&mut self) {
        for (e, w) in self.block_energy.iter_mut().zip(&self.background) {
            *e = w.iter().fold(T::zero(), |a, c| a + c.norm_sqr());
        }
    }

    /// Projects background block `k` onto filters whose time response fits
    /// in the first half of the FFT window.
    pub fn constrain_block(&mut self, k: usize) {
        let n = 2 * self.block_len;
        let mut time = vec![T::zero(); n];
        let w = std::mem::take(&mut self.background[k]);
        self.ifft(&w, &mut time);
        let scale = T::one() / T::from_len(n);
        for (i, t) in time.iter_mut().enumerate() {
            *t = if i < self.block_len { *t * scale } else { T::zero() };
        }
        let mut out = w;
        self.fft(&time, &mut out);
        self.block_energy[k] = out.iter().fold(T::zero(), |a, c| a + c.norm_sqr());
        self.background[k] = out;
    }

    /// Constrains the rotation-selected block and the highest-energy block,
    /// then advances the rotation. Returns the constrained block indices.
    pub fn constrain_blocks(&mut self) -> (usize, usize) {
        let rot = self.rotation;
        let mut highest = 0;
        for k in 1..self.n_blocks {
            if self.block_energy[k] > self.block_energy[highest] {
                highest = k;
            }
        }
        self.constrain_block(rot);
        if highest != rot {
            self.constrain_block(highest);
        }
        self.rotation = (self.rotation + 1) % self.n_blocks;
        (rot, highest)
    }

    pub fn promote(&mut self) {
        for (f, b) in self.foreground.iter_mut().zip(&self.background) {
            f.copy_from_slice(b);
        }
    }

    pub fn reset_background(&mut self) {
        for (b, f) in self.background.iter_mut().zip(&self.foreground) {
            b.copy_from_slice(f);
        }
        self.refresh_energies();
    }

    pub fn clear_background(&mut self) {
        for b in self.background.iter_mut() {
            b.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
        }
        self.refresh_energies();
    }

    /// Time-domain taps of one block (first `block_len` samples of the
    /// block's inverse transform).
    pub fn block_taps(&mut self, path: Path, k: usize) -> Vec<T> {
        let n = 2 * self.block_len;
        let mut time = vec![T::zero(); n];
        let w = match path {
            Path::Foreground => self.foreground[k].clone(),
            Path::Background => self.background[k].clone(),
        };
        self.ifft(&w, &mut time);
        let scale = T::one() / T::from_len(n);
        time.truncate(self.block_len);
        time.iter_mut().for_each(|t| *t *= scale);
        time
    }

    /// Concatenated taps of all blocks, `n_blocks * block_len` samples.
    pub fn impulse_response(&mut self, path: Path) -> Vec<T> {
        (0..self.n_blocks)
            .flat_map(|k| self.block_taps(path, k))
            .collect()
    }

    /// Sets both filter copies to the given impulse response (zero-padded or
    /// truncated to the filter length).
    pub fn load_impulse_response(&mut self, h: &[T]) {
        self.set_impulse_response(Path::Foreground, h);
        self.set_impulse_response(Path::Background, h);
    }

    pub fn set_impulse_response(&mut self, path: Path, h: &[T]) {
        let b = self.block_len;
        for k in 0..self.n_blocks {
            let mut time = vec![T::zero(); 2 * b];
            for i in 0..b {
                if let Some(&v) = h.get(k * b + i) {
                    time[i] = v;
                }
            }
            let mut spec = vec![Complex::new(T::zero(), T::zero()); self.n_bins];
            self.fft(&time, &mut spec);
            match path {
                Path::Foreground => self.foreground[k] = spec,
                Path::Background => self.background[k] = spec,
            }
        }
        self.refresh_energies();
    }
}
