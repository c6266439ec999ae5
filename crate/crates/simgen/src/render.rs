//! Scenario rendering: `d = x*h_x + v + clip(f delayed)*h_f`.

use std::path::Path;

use realfft::RealFftPlanner;

use crate::error::{Error, Result};
use crate::rir::{scale_early, synth_rir, target_rir};
use crate::scenario::Scenario;
use crate::{stream_rng, sub_seed};

const ACTIVE_FLOOR: f64 = 1e-4;

/// All signals of a rendered scenario at the scenario rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub sample_rate: u32,
    /// Microphone `d`, the sum of the three components below.
    pub mic: Vec<f64>,
    /// Far-end reference `f` as sent to the loudspeaker, undelayed.
    pub far: Vec<f64>,
    /// Training target: near-end speech through the early response with a
    /// short late tail.
    pub target: Vec<f64>,
    pub near: Vec<f64>,
    pub echo: Vec<f64>,
    pub noise: Vec<f64>,
    pub delay_samples: usize,
}

impl Rendered {
    /// Writes `<stem>.mic.wav`, `<stem>.far.wav` and `<stem>.target.wav`.
    pub fn write_wavs(&self, dir: &Path, stem: &str) -> Result<()> {
        for (suffix, x) in [("mic", &self.mic), ("far", &self.far), ("target", &self.target)] {
            duplex_core::wav::write(dir.join(format!("{stem}.{suffix}.wav")), self.sample_rate, x)?;
        }
        Ok(())
    }
}

/// Linear convolution truncated to `x.len()` samples.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a = vec![0.0; n];
    a[..x.len()].copy_from_slice(x);
    let mut b = vec![0.0; n];
    b[..h.len()].copy_from_slice(h);
    let mut fa = fwd.make_output_vec();
    let mut fb = fwd.make_output_vec();
    fwd.process(&mut a, &mut fa).expect("sizes match the plan");
    fwd.process(&mut b, &mut fb).expect("sizes match the plan");
    for (p, q) in fa.iter_mut().zip(&fb) {
        *p *= q;
    }
    fa[0].im = 0.0;
    fa[n / 2].im = 0.0;
    inv.process(&mut fa, &mut a).expect("sizes match the plan");
    a.truncate(x.len());
    a.iter_mut().for_each(|v| *v /= n as f64);
    a
}

/// Blackman-windowed sinc low-pass, applied without delay.
pub fn lowpass(x: &[f64], cutoff_hz: f64, sample_rate: u32) -> Vec<f64> {
    let half = (sample_rate as usize / 100).max(32);
    let fc = cutoff_hz / sample_rate as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * m).sin() / (std::f64::consts::PI * m)
            };
            let t = i as f64 / (2 * half) as f64;
            let w = 0.42 - 0.5 * (2.0 * std::f64::consts::PI * t).cos()
                + 0.08 * (4.0 * std::f64::consts::PI * t).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / sum).collect();
    let mut padded = x.to_vec();
    padded.extend(std::iter::repeat(0.0).take(half));
    convolve(&padded, &taps)[half..].to_vec()
}

/// 10 ms frames whose energy is within 40 dB of the loudest frame.
pub fn active_frames(x: &[f64], sample_rate: u32) -> Vec<bool> {
    let hop = sample_rate as usize / 100;
    let e: Vec<f64> = x.chunks(hop).map(|c| c.iter().map(|v| v * v).sum()).collect();
    let peak = e.iter().cloned().fold(0.0, f64::max);
    e.iter().map(|&v| peak > 0.0 && v >= peak * ACTIVE_FLOOR).collect()
}

/// Mean power of `x` over the frames selected by `mask`.
pub fn active_power(x: &[f64], mask: &[bool], sample_rate: u32) -> f64 {
    let hop = sample_rate as usize / 100;
    let (mut e, mut n) = (0.0, 0usize);
    for (c, &on) in x.chunks(hop).zip(mask) {
        if on {
            e += c.iter().map(|v| v * v).sum::<f64>();
            n += c.len();
        }
    }
    if n == 0 { 0.0 } else { e / n as f64 }
}

fn scale_to(x: &mut [f64], power: f64, target: f64) {
    if power > 0.0 {
        let g = (target / power).sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn load_rir(path: &Path, rate: u32) -> Result<Vec<f64>> {
    let (r, h) = duplex_core::wav::read::<f64>(path)
        .map_err(|e| Error::Source { path: path.into(), message: e.to_string() })?;
    if r != rate {
        return Err(Error::Source { path: path.into(), message: format!("{r} Hz, scenario is {rate} Hz") });
    }
    Ok(h)
}

/// Near-end and far-end room responses after loading or synthesis and the
/// early-reflection gain.
pub fn responses(s: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
    let rate = s.sample_rate;
    let ms = |v: f64| ((v * rate as f64 / 1000.0).round() as usize).max(1);
    let mut hx = match &s.near_rir {
        Some(p) => load_rir(p, rate)?,
        None => synth_rir(sub_seed(s.seed, 4), s.rt60_near, ms(s.near_rir_ms), rate),
    };
    scale_early(&mut hx, s.early_gain, rate);
    let hf = match &s.far_rir {
        Some(p) => load_rir(p, rate)?,
        None => synth_rir(sub_seed(s.seed, 5), s.rt60_far, ms(s.far_rir_ms), rate),
    };
    Ok((hx, hf))
}

/// Renders all signals of `s`. Deterministic in the scenario.
pub fn render(s: &Scenario) -> Result<Rendered> {
    s.validate()?;
    let rate = s.sample_rate;
    let len = s.len();
    let mut x = s.near.generate(s.seed, 1, rate, len)?;
    let mut f = s.far.generate(s.seed, 2, rate, len)?;
    let mut v = s.noise.generate(s.seed, 3, rate, len)?;
    let (hx, hf) = responses(s)?;

    let reference = 10f64.powf(s.level_dbfs / 10.0);
    let far_power = active_power(&f, &active_frames(&f, rate), rate);
    scale_to(&mut f, far_power, 10f64.powf(s.far_level_dbfs / 10.0));

    // band-limiting the sources keeps the level ratios exact
    let band_limit = |sig: &mut Vec<f64>| {
        if let Some(fc) = s.lowpass_hz {
            *sig = lowpass(sig, fc, rate);
        }
    };
    band_limit(&mut x);
    band_limit(&mut v);

    let mut near = convolve(&x, &hx);
    let mut target = convolve(&x, &target_rir(&hx, s.rt60_near, rate));
    let near_mask = active_frames(&near, rate);
    let near_power = active_power(&near, &near_mask, rate);
    if near_power > 0.0 {
        let g = (reference / near_power).sqrt();
        near.iter_mut().for_each(|v| *v *= g);
        target.iter_mut().for_each(|v| *v *= g);
    }
    let near_active = near_power > 0.0;

    let delay = (s.delay_ms * rate as f64 / 1000.0).round() as usize;
    let mut echo = vec![0.0; len];
    if let Some(er) = s.echo_ratio_db {
        let mut played = vec![0.0; len];
        for n in delay..len {
            played[n] = s.clip.apply(f[n - delay]);
        }
        band_limit(&mut played);
        echo = convolve(&played, &hf);
        let p = active_power(&echo, &active_frames(&echo, rate), rate);
        scale_to(&mut echo, p, reference * 10f64.powf(er / 10.0));
    }

    let mut noise = vec![0.0; len];
    if let Some(snr) = s.snr_db {
        noise = v;
        let mask = if near_active { near_mask.clone() } else { vec![true; near_mask.len()] };
        let p = active_power(&noise, &mask, rate);
        scale_to(&mut noise, p, reference / 10f64.powf(snr / 10.0));
    }

    let mic = (0..len).map(|n| near[n] + echo[n] + noise[n]).collect();
    Ok(Rendered { sample_rate: rate, mic, far: f, target, near, echo, noise, delay_samples: delay })
}

/// Random cutoff for low-pass augmentation, between 3 kHz and 90% of Nyquist.
pub fn random_cutoff(seed: u64, sample_rate: u32) -> f64 {
    use rand::Rng;
    let top = 0.45 * sample_rate as f64;
    stream_rng(seed, 6).gen_range(3000.0..top)
}
