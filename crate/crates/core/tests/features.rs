mod common;

use common::*;
use duplex_core::dsp::{Analyzer, BandLayout};
use duplex_core::features::{excitation_l1l2, layout, nonstationarity, FeatureExtractor, FeatureInputs};
use proptest::prelude::*;

fn band_logs(x: &[f64], fx: &FeatureExtractor<f64>) -> Vec<Vec<f64>> {
    let bands = BandLayout::<f64>::for_rate(16000, 320);
    let mut an = Analyzer::<f64>::new(160);
    x.chunks(160)
        .map(|c| {
            let s = an.analyze(c).unwrap();
            bands.band_energies(&s.bins).unwrap().iter().map(|&e| fx.log_energy(e)).collect()
        })
        .collect()
}

#[test]
fn gaussian_residual_ratio_is_sqrt_two_over_pi() {
    let mut sum = 0.0;
    for seed in 0..100 {
        let mut g = rng(seed);
        sum += excitation_l1l2(&white(&mut g, 320, 0.2));
    }
    let mean = sum / 100.0;
    assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.05, "{mean}");
}

#[test]
fn white_noise_is_stationary() {
    let fx = FeatureExtractor::<f64>::new(320);
    let mut sum = 0.0;
    for seed in 0..100 {
        let mut g = rng(100 + seed);
        let logs = band_logs(&white(&mut g, 160 * 12, 0.1), &fx);
        sum += nonstationarity(&logs[10], &logs[11]);
    }
    assert!(sum / 100.0 < 0.2, "mean {}", sum / 100.0);
}

#[test]
fn alternating_loud_and_silent_frames_are_nonstationary() {
    let mut g = rng(6);
    let loud = white(&mut g, 320, 0.3);
    let mut ex = FeatureExtractor::<f64>::new(320);
    let q = vec![0.0; 32];
    let bands = BandLayout::<f64>::for_rate(16000, 320);
    let mut an = Analyzer::<f64>::new(160);
    let spec = an.analyze_window(&loud).unwrap();
    let e = bands.band_energies(&spec.bins).unwrap();
    let z = vec![0.0; 32];
    let mut last = 0.0;
    for t in 0..6 {
        let y = if t % 2 == 0 { &e } else { &z };
        let f = ex.build(&FeatureInputs { mic_bands: y, far_bands: &z, coherence: &q, period: 0.0, correlation: 0.0, window: &loud });
        last = f[layout::NONSTATIONARITY];
    }
    assert!(last > 0.8);
}

#[test]
fn scaling_shifts_log_energies_by_two() {
    let mut g = rng(7);
    let bands = BandLayout::<f64>::for_rate(16000, 320);
    let mut an = Analyzer::<f64>::new(160);
    let y = white(&mut g, 320, 0.3);
    let f = white(&mut g, 320, 0.3);
    let q: Vec<f64> = (0..32).map(|b| b as f64 / 40.0).collect();
    let build = |scale: f64, an: &mut Analyzer<f64>| {
        let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let fs: Vec<f64> = f.iter().map(|v| v * scale).collect();
        let ey = bands.band_energies(&an.analyze_window(&ys).unwrap().bins).unwrap();
        let ef = bands.band_energies(&an.analyze_window(&fs).unwrap().bins).unwrap();
        let mut fx = FeatureExtractor::<f64>::new(320);
        fx.build(&FeatureInputs { mic_bands: &ey, far_bands: &ef, coherence: &q, period: 0.3, correlation: 0.6, window: &ys })
    };
    let a = build(1.0, &mut an);
    let b = build(10.0, &mut an);
    for i in (0..32).chain(64..96) {
        assert!((b[i] - a[i] - 2.0).abs() < 1e-4, "feature {i}: {} vs {}", a[i], b[i]);
    }
    for i in (32..64).chain([layout::PERIOD, layout::CORRELATION]) {
        assert_eq!(a[i], b[i]);
    }
    assert!((a[layout::EXCITATION] - b[layout::EXCITATION]).abs() < 1e-9);
}

proptest! {
    #[test]
    fn features_are_finite(kind in 0usize..3, pos in 0usize..320, amp in -1.0f64..1.0) {
        let window: Vec<f64> = match kind {
            0 => vec![0.0; 320],
            1 => (0..320).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
            _ => (0..320).map(|i| if i == pos { amp } else { 0.0 }).collect(),
        };
        let bands = BandLayout::<f64>::for_rate(16000, 320);
        let mut an = Analyzer::<f64>::new(160);
        let e = bands.band_energies(&an.analyze_window(&window).unwrap().bins).unwrap();
        let q = vec![1.0; 32];
        let mut fx = FeatureExtractor::<f64>::new(320);
        for _ in 0..3 {
            let f = fx.build(&FeatureInputs { mic_bands: &e, far_bands: &e, coherence: &q, period: 1.0, correlation: -1.0, window: &window });
            prop_assert_eq!(f.len(), 100);
            prop_assert!(f.iter().all(|v| v.is_finite()));
            prop_assert!((0.0..=1.0).contains(&f[layout::EXCITATION]));
            prop_assert!((0.0..1.0).contains(&f[layout::NONSTATIONARITY]));
        }
    }
}
