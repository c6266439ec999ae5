#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Random decaying FIR of `len` taps.
pub fn random_fir(rng: &mut ChaCha8Rng, len: usize, gain: f64) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).unwrap();
    let tau = len as f64 / 4.0;
    let mut h: Vec<f64> = (0..len)
        .map(|i| d.sample(rng) * (-(i as f64) / tau).exp())
        .collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v *= gain / norm);
    h
}

pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &hj) in h.iter().enumerate().take(n + 1) {
            acc += hj * x[n - j];
        }
        *out = acc;
    }
    y
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
