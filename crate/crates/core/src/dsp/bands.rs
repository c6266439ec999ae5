use std::fmt::Write as _;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::Real;

/// One value per perceptual band.
pub type BandVector<T> = Vec<T>;

fn erb_rate(hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * hz).log10()
}

fn erb_rate_inv(erb: f64) -> f64 {
    (10f64.powf(erb / 21.4) - 1.0) / 0.00437
}

/// Triangular bands with centers spaced uniformly on the ERB-rate scale.
///
/// Every bin belongs to at most two adjacent bands: `lower[k]` with weight
/// `weight[k]` and `lower[k] + 1` with weight `1 - weight[k]`. Bins at or
/// below the first center and at or above the last center belong entirely
/// to the edge band, so the weights form a partition of unity over the
/// whole spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLayout<T> {
    n_bands: usize,
    centers_hz: Vec<f64>,
    bin_hz: f64,
    lower: Vec<usize>,
    weight: Vec<T>,
}

impl<T: Real> BandLayout<T> {
    /// Layout for an FFT of `window_len` samples at `sample_rate`, with band
    /// centers from 0 Hz to `max_hz`.
    pub fn new(n_bands: usize, sample_rate: u32, window_len: usize, max_hz: f64) -> Self {
        assert!(n_bands >= 2);
        let top = erb_rate(max_hz);
        let centers_hz: Vec<f64> = (0..n_bands)
            .map(|b| erb_rate_inv(top * b as f64 / (n_bands - 1) as f64))
            .collect();
        let n_bins = window_len / 2 + 1;
        let bin_hz = sample_rate as f64 / window_len as f64;
        let mut lower = Vec::with_capacity(n_bins);
        let mut weight = Vec::with_capacity(n_bins);
        let mut b = 0usize;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            if f >= centers_hz[n_bands - 1] {
                lower.push(n_bands - 1);
                weight.push(T::one());
                continue;
            }
            while f >= centers_hz[b + 1] {
                b += 1;
            }
            let w = (centers_hz[b + 1] - f) / (centers_hz[b + 1] - centers_hz[b]);
            lower.push(b);
            weight.push(T::lit(w));
        }
        Self {
            n_bands,
            centers_hz,
            bin_hz,
            lower,
            weight,
        }
    }

    /// 32 bands up to 8 kHz for 16 kHz audio, stretched to 20 kHz at 48 kHz.
    pub fn for_rate(sample_rate: u32, window_len: usize) -> Self {
        let max_hz = if sample_rate >= 48_000 { 20_000.0 } else { sample_rate as f64 / 2.0 };
        Self::new(crate::NB_BANDS, sample_rate, window_len, max_hz)
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_bins(&self) -> usize {
        self.lower.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Weight of band `band` at bin `bin`.
    pub fn weight(&self, band: usize, bin: usize) -> T {
        let lo = self.lower[bin];
        if band == lo {
            self.weight[bin]
        } else if band == lo + 1 {
            T::one() - self.weight[bin]
        } else {
            T::zero()
        }
    }

    /// Visits every `(bin, band, weight)` triple with a non-zero weight.
    #[inline]
    pub fn for_each_weight(&self, mut f: impl FnMut(usize, usize, T)) {
        let last = self.n_bands - 1;
        for (k, (&lo, &w)) in self.lower.iter().zip(&self.weight).enumerate() {
            if w != T::zero() {
                f(k, lo, w);
            }
            let rest = T::one() - w;
            if lo < last && rest != T::zero() {
                f(k, lo + 1, rest);
            }
        }
    }

    fn check_bins(&self, n: usize) -> Result<()> {
        if n != self.n_bins() {
            return Err(Error::SpectrumSize {
                expected: self.n_bins(),
                found: n,
            });
        }
        Ok(())
    }

    /// Weighted per-band sum of a per-bin quantity.
    pub fn accumulate(&self, per_bin: &[T]) -> BandVector<T> {
        let mut out = vec![T::zero(); self.n_bands];
        self.for_each_weight(|k, b, w| out[b] += w * per_bin[k]);
        out
    }

    /// `values[b] = sum_k w_b(k) |X_k|^2`.
    pub fn band_energies(&self, bins: &[Complex<T>]) -> Result<BandVector<T>> {
        self.check_bins(bins.len())?;
        let mut out = vec![T::zero(); self.n_bands];
        self.for_each_weight(|k, b, w| out[b] += w * bins[k].norm_sqr());
        Ok(out)
    }

    /// `values[b] = sum_k w_b(k) Re(X_k conj(Y_k))`.
    pub fn band_cross(&self, x: &[Complex<T>], y: &[Complex<T>]) -> Result<BandVector<T>> {
        self.check_bins(x.len())?;
        self.check_bins(y.len())?;
        let mut out = vec![T::zero(); self.n_bands];
        self.for_each_weight(|k, b, w| {
            out[b] += w * (x[k].re * y[k].re + x[k].im * y[k].im);
        });
        Ok(out)
    }

    /// Piecewise-linear per-bin curve `g(k) = sum_b w_b(k) gains[b]`.
    pub fn interpolate(&self, gains: &[T]) -> Vec<T> {
        assert_eq!(gains.len(), self.n_bands);
        let last = self.n_bands - 1;
        self.lower
            .iter()
            .zip(&self.weight)
            .map(|(&lo, &w)| {
                if lo == last {
                    gains[lo]
                } else {
                    w * gains[lo] + (T::one() - w) * gains[lo + 1]
                }
            })
            .collect()
    }

    /// Text table with one line per non-zero `(bin, band)` weight:
    /// `bin<TAB>freq_hz<TAB>band<TAB>weight`, preceded by a `#` header.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# bands={} bins={} bin_hz={}",
            self.n_bands,
            self.n_bins(),
            self.bin_hz
        );
        let _ = writeln!(
            s,
            "# centers_hz={}",
            self.centers_hz
                .iter()
                .map(|c| format!("{c:.6}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        self.for_each_weight(|k, b, w| {
            let _ = writeln!(
                s,
                "{k}\t{:.3}\t{b}\t{:.9}",
                k as f64 * self.bin_hz,
                w.to_f64_lossy()
            );
        });
        s
    }
}
