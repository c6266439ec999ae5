//! Synthetic room impulse responses.

use rand_distr::{Distribution, StandardNormal};

use crate::stream_rng;

/// Length of the early-reflection segment, in seconds.
pub const EARLY_SECONDS: f64 = 0.020;
/// Decay of the target's late reverberation, in seconds.
pub const TARGET_RT60: f64 = 0.200;
/// Ratio of tail amplitude to the direct path at time zero.
const TAIL_LEVEL: f64 = 0.25;

pub const RT60_RANGE: (f64, f64) = (0.05, 1.5);

/// Amplitude envelope giving 60 dB of energy decay after `rt60` seconds.
pub fn decay_envelope(t: f64, rt60: f64) -> f64 {
    (-3.0 * std::f64::consts::LN_10 * t / rt60).exp()
}

/// Direct-path spike followed by an exponentially decaying white-noise
/// tail, normalized to unit energy.
pub fn synth_rir(seed: u64, rt60: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    assert!(
        (RT60_RANGE.0..=RT60_RANGE.1).contains(&rt60),
        "rt60 {rt60} outside {RT60_RANGE:?}"
    );
    assert!(len > 0);
    let mut rng = stream_rng(seed, 0x5249_5200);
    let fs = sample_rate as f64;
    let mut h: Vec<f64> = (0..len)
        .map(|n| {
            let w: f64 = StandardNormal.sample(&mut rng);
            if n == 0 {
                1.0
            } else {
                TAIL_LEVEL * w * decay_envelope(n as f64 / fs, rt60)
            }
        })
        .collect();
    let e = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= e);
    h
}

/// Scales the reflections within the first 20 ms after the direct path.
pub fn scale_early(h: &mut [f64], gain: f64, sample_rate: u32) {
    if gain == 1.0 {
        return;
    }
    let end = ((EARLY_SECONDS * sample_rate as f64).round() as usize).min(h.len());
    for v in h.iter_mut().take(end).skip(1) {
        *v *= gain;
    }
}

/// The target response: early part kept, late part re-windowed so it
/// decays at [`TARGET_RT60`] instead of `rt60`. Shorter decays are kept.
pub fn target_rir(h: &[f64], rt60: f64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let early = (EARLY_SECONDS * fs).round() as usize;
    if rt60 <= TARGET_RT60 {
        return h.to_vec();
    }
    h.iter()
        .enumerate()
        .map(|(n, &v)| {
            if n < early {
                v
            } else {
                let t = (n - early) as f64 / fs;
                v * decay_envelope(t, TARGET_RT60) / decay_envelope(t, rt60)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_energy_and_direct_peak() {
        let h = synth_rir(3, 0.4, 8000, 16_000);
        let e: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-12);
        let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(peak, h[0].abs());
    }

    #[test]
    fn early_gain_only_touches_the_first_20ms() {
        let h = synth_rir(1, 0.3, 4000, 16_000);
        let mut g = h.clone();
        scale_early(&mut g, 1.5, 16_000);
        assert_eq!(g[0], h[0]);
        assert_eq!(g[1], 1.5 * h[1]);
        assert_eq!(g[319], 1.5 * h[319]);
        assert_eq!(g[320..], h[320..]);
    }

    #[test]
    #[should_panic]
    fn rt60_out_of_range() {
        synth_rir(1, 2.0, 100, 16_000);
    }
}
