//! Network input features.

use crate::{Real, NB_BANDS, NB_FEATURES};

/// Offsets of each feature group in the 100-value vector.
pub mod layout {
    use crate::NB_BANDS;

    pub const MIC_ENERGY: usize = 0;
    pub const COHERENCE: usize = NB_BANDS;
    pub const FAR_ENERGY: usize = 2 * NB_BANDS;
    pub const PERIOD: usize = 3 * NB_BANDS;
    pub const CORRELATION: usize = PERIOD + 1;
    pub const NONSTATIONARITY: usize = PERIOD + 2;
    pub const EXCITATION: usize = PERIOD + 3;
}

/// Order of the linear predictor whose residual defines the excitation.
pub const LPC_ORDER: usize = 16;

/// Per-frame quantities the feature vector is built from.
#[derive(Debug, Clone, Copy)]
pub struct FeatureInputs<'a, T> {
    /// Band energies of the echo-cancelled signal, newest frame.
    pub mic_bands: &'a [T],
    /// Band energies of the far end, newest frame.
    pub far_bands: &'a [T],
    /// Pitch coherence of the frame being enhanced.
    pub coherence: &'a [T],
    /// Pitch period mapped to `[0, 1]`.
    pub period: T,
    pub correlation: T,
    /// Newest analysis window of the echo-cancelled signal.
    pub window: &'a [T],
}

/// Stateful feature builder; the only state is the previous frame's band
/// log-energies.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<T> {
    floor: T,
    prev_log: Option<Vec<T>>,
}

impl<T: Real> FeatureExtractor<T> {
    /// `window_len` sets the energy floor: `1e-9` of the energy of a
    /// full-scale constant window.
    pub fn new(window_len: usize) -> Self {
        Self {
            floor: T::lit(1e-9) * T::from_len(window_len),
            prev_log: None,
        }
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    pub fn log_energy(&self, e: T) -> T {
        (self.floor + e).log10()
    }

    pub fn reset(&mut self) {
        self.prev_log = None;
    }

    pub fn build(&mut self, inputs: &FeatureInputs<'_, T>) -> Vec<T> {
        assert_eq!(inputs.mic_bands.len(), NB_BANDS);
        assert_eq!(inputs.far_bands.len(), NB_BANDS);
        assert_eq!(inputs.coherence.len(), NB_BANDS);
        let mut f = vec![T::zero(); NB_FEATURES];
        let mic_log: Vec<T> = inputs.mic_bands.iter().map(|&e| self.log_energy(e)).collect();
        f[layout::MIC_ENERGY..layout::MIC_ENERGY + NB_BANDS].copy_from_slice(&mic_log);
        for b in 0..NB_BANDS {
            f[layout::COHERENCE + b] = inputs.coherence[b].max(T::zero()).min(T::one());
            f[layout::FAR_ENERGY + b] = self.log_energy(inputs.far_bands[b]);
        }
        f[layout::PERIOD] = inputs.period;
        f[layout::CORRELATION] = inputs.correlation;
        f[layout::NONSTATIONARITY] = match &self.prev_log {
            Some(prev) => nonstationarity(prev, &mic_log),
            None => T::zero(),
        };
        f[layout::EXCITATION] = T::lit(excitation_l1l2(inputs.window));
        self.prev_log = Some(mic_log);
        f
    }
}

/// `x / (1 + x)` of the mean squared difference between two frames of band
/// log-energies.
pub fn nonstationarity<T: Real>(prev: &[T], cur: &[T]) -> T {
    let n = T::from_len(cur.len());
    let msd = prev
        .iter()
        .zip(cur)
        .fold(T::zero(), |acc, (&a, &b)| acc + (b - a) * (b - a))
        / n;
    msd / (T::one() + msd)
}

/// Levinson-Durbin recursion on autocorrelation `r`; returns the predictor
/// `a[1..=order]` such that `e(n) = x(n) + sum_i a_i x(n - i)`, or `None`
/// when the autocorrelation is singular.
pub fn levinson(r: &[f64], order: usize) -> Option<Vec<f64>> {
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    Some(a[1..].to_vec())
}

/// Ratio `||e||_1 / (sqrt(N) ||e||_2)` of the order-16 linear-prediction
/// residual of `x`; zero for silence.
pub fn excitation_l1l2<T: Real>(x: &[T]) -> f64 {
    let n = x.len();
    let xs: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
    if n == 0 || xs.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let order = LPC_ORDER.min(n - 1);
    let w: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, v)| v * (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin())
        .collect();
    let mut r: Vec<f64> = (0..=order)
        .map(|k| (k..n).map(|i| w[i] * w[i - k]).sum())
        .collect();
    // white-noise correction keeps the recursion well conditioned
    r[0] *= 1.0 + 1e-9;
    let a = match levinson(&r, order) {
        Some(a) => a,
        None => return 0.0,
    };
    let (mut l1, mut l2) = (0.0, 0.0);
    for i in 0..n {
        let mut e = xs[i];
        for (j, aj) in a.iter().enumerate() {
            if i > j {
                e += aj * xs[i - j - 1];
            }
        }
        l1 += e.abs();
        l2 += e * e;
    }
    if l2 <= 0.0 {
        return 0.0;
    }
    l1 / ((n as f64).sqrt() * l2.sqrt())
}
