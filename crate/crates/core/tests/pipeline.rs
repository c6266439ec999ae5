mod common;

use std::sync::Arc;

use common::*;
use duplex_core::model::variants::{self, VariantSpec};
use duplex_core::model::IdentityPredictor;
use duplex_core::pipeline::{erle_star, process_files, Engine, EngineConfig, StreamStats};
use duplex_core::{wav, Error};

fn null_config(rate: u32) -> EngineConfig {
    let mut c = EngineConfig::new(rate);
    c.res_only = true;
    c.enhancement.postfilter = false;
    c
}

fn run(engine: &mut Engine<f64>, mic: &[f64], far: &[f64]) -> Vec<f64> {
    let hop = engine.hop();
    let mut out = Vec::with_capacity(mic.len());
    for (m, f) in mic.chunks(hop).zip(far.chunks(hop)) {
        let y = engine.process_frame(m, f).unwrap();
        assert_eq!(y.len(), hop);
        out.extend(y);
    }
    out
}

#[test]
fn identity_pipeline_is_a_pure_delay() {
    for rate in [16_000u32, 48_000] {
        let mut r = rng(1);
        let n = rate as usize * 2;
        let x = white(&mut r, n, 0.2);
        let c = null_config(rate);
        let shift = c.output_shift();
        assert_eq!(shift * 1000 / rate as usize, 30);
        let mut e = Engine::<f64>::new(c, Box::new(IdentityPredictor)).unwrap();
        let y = run(&mut e, &x, &vec![0.0; n]);
        let err = (shift..n).map(|i| (y[i] - x[i - shift]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{rate}: {err}");
        assert!(y[..shift].iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn impulse_trace_gives_forty_ms_algorithmic_delay() {
    let c = null_config(16_000);
    let hop = c.hop();
    let mut e = Engine::<f64>::new(c.clone(), Box::new(IdentityPredictor)).unwrap();
    let mut x = vec![0.0; 16_000];
    let n0 = 4000;
    x[n0] = 0.5;
    let y = run(&mut e, &x, &vec![0.0; 16_000]);
    let peak = y.iter().enumerate().fold(0, |b, (i, v)| if v.abs() > y[b].abs() { i } else { b });
    assert_eq!(peak - n0, c.output_shift());
    // the impulse needs its whole input hop to arrive before processing starts
    let frame_wait = hop - 1 - (n0 % hop);
    let worst_case = (c.output_shift() + hop) as f64 / 16.0;
    assert!(peak - n0 + frame_wait < c.output_shift() + hop);
    assert_eq!(worst_case, 40.0);
    assert_eq!(c.algorithmic_delay_ms(), 40.0);
}

#[test]
fn silence_in_silence_out() {
    let w = Arc::new(variants::build(&VariantSpec::small(), 16_000, 3));
    let mut e = Engine::<f64>::with_weights(EngineConfig::new(16_000), w).unwrap();
    let z = vec![0.0; 16_000];
    let y = run(&mut e, &z, &z);
    assert!(y.iter().all(|&v| v == 0.0));
    let s = e.stats();
    assert!(s.rtf > 0.0);
    assert_eq!(s.frames, 100);
}

fn echo_scenario(seed: u64, secs: f64, delay: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let n = (16_000.0 * secs) as usize;
    let far = white(&mut r, n, 0.1);
    let h = random_fir(&mut r, 800, 0.5);
    let mut hd = vec![0.0; delay];
    hd.extend(h);
    let echo = convolve(&far, &hd);
    let noise = white(&mut r, n, 0.001);
    let mic = echo.iter().zip(&noise).map(|(a, b)| a + b).collect();
    (mic, far)
}

#[test]
fn end_to_end_is_deterministic() {
    let (mic, far) = echo_scenario(4, 2.0, 320);
    let w = Arc::new(variants::build(&VariantSpec::small(), 16_000, 4));
    let go = || {
        let mut e = Engine::<f64>::with_weights(EngineConfig::new(16_000), Arc::clone(&w)).unwrap();
        let y = run(&mut e, &mic, &far);
        (y, e.stats().erle_star_db)
    };
    let (a, ea) = go();
    let (b, eb) = go();
    assert_eq!(a, b);
    assert_eq!(ea.to_bits(), eb.to_bits());
    assert!(ea.is_finite() && ea > 0.0);
}

#[test]
fn aec_only_cancels_echo_and_reports_delay() {
    let (mic, far) = echo_scenario(5, 4.0, 1600);
    let mut c = EngineConfig::new(16_000);
    c.aec_only = true;
    let mut e = Engine::<f64>::new(c.clone(), Box::new(IdentityPredictor)).unwrap();
    let y = run(&mut e, &mic, &far);
    let tail = 3 * 16_000;
    let erle = erle_star(&mic[tail..], &y[tail..], 0);
    assert!(erle > 15.0, "{erle}");
    let d = e.stats().delay_ms;
    assert!((d - 100.0).abs() <= 10.0, "{d}");
}

#[test]
fn non_finite_frames_are_zeroed_and_counted() {
    let (mut mic, far) = echo_scenario(6, 1.0, 0);
    mic[3205] = f64::NAN;
    mic[6000] = f64::INFINITY;
    let w = Arc::new(variants::build(&VariantSpec::small(), 16_000, 6));
    let mut e = Engine::<f64>::with_weights(EngineConfig::new(16_000), w).unwrap();
    let y = run(&mut e, &mic, &far);
    assert!(y.iter().all(|v| v.is_finite()));
    assert_eq!(e.stats().nan_frames, 2);
    assert!(y[20 * 160..21 * 160].iter().all(|&v| v == 0.0));
}

#[test]
fn bypass_cannot_change_mid_stream() {
    let mut e = Engine::<f64>::new(EngineConfig::new(16_000), Box::new(IdentityPredictor)).unwrap();
    e.process_frame(&[0.0; 160], &[0.0; 160]).unwrap();
    assert!(matches!(e.set_bypass(true, false), Err(Error::ConfigImmutable)));
    assert!(matches!(e.process_frame(&[0.0; 100], &[0.0; 100]), Err(Error::FrameLength { .. })));
}

#[test]
fn erle_star_reads_twenty_db_for_a_tenth() {
    let mut r = rng(7);
    let d = white(&mut r, 16_000, 0.3);
    let x: Vec<f64> = d.iter().map(|v| v / 10.0).collect();
    assert!((erle_star(&d, &x, 0) - 20.0).abs() < 1e-9);
}

#[test]
fn files_round_trip_with_stats_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = echo_scenario(8, 1.0, 0);
    let mic_p = dir.path().join("mic.wav");
    let far_p = dir.path().join("far.wav");
    let out_p = dir.path().join("out.wav");
    wav::write(&mic_p, 16_000, &mic).unwrap();
    // shorter far end is zero padded
    wav::write(&far_p, 16_000, &far[..12_000]).unwrap();
    let model = dir.path().join("m.pnw");
    variants::build(&VariantSpec::small(), 16_000, 8).save(&model).unwrap();
    let mut c = EngineConfig::new(16_000);
    c.model_path = Some(model);
    c.stats_path = Some(dir.path().join("stats.json"));
    c.dump_features = Some(dir.path().join("f.bin"));
    let stats = process_files(&mic_p, &far_p, &out_p, &c).unwrap();
    let (rate, out) = wav::read::<f64>(&out_p).unwrap();
    assert_eq!(rate, 16_000);
    assert_eq!(out.len(), 16_000);
    assert_eq!(stats.frames, 100);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    for key in ["erle_star_db", "rtf", "delay_ms", "frames", "nan_frames"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(std::fs::metadata(dir.path().join("f.bin")).unwrap().len(), 100 * 400);
    let again = process_files(&mic_p, &far_p, &dir.path().join("o2.wav"), &c).unwrap();
    assert_eq!(std::fs::read(&out_p).unwrap(), std::fs::read(dir.path().join("o2.wav")).unwrap());
    assert_eq!(StreamStats { rtf: 0.0, ..again }, StreamStats { rtf: 0.0, ..stats });

    wav::write(&far_p, 48_000, &far).unwrap();
    let err = process_files(&mic_p, &far_p, &out_p, &c).unwrap_err();
    assert!(err.to_string().contains("expected 16000 Hz"), "{err}");
}

#[test]
fn model_rate_must_match_stream() {
    let w = Arc::new(variants::identity_stub(48_000));
    assert!(Engine::<f32>::with_weights(EngineConfig::new(16_000), w).is_err());
}
