//! Signal sources.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stream_rng;

/// A signal generator. Output level is arbitrary; rendering rescales it.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Silence,
    /// Harmonic voiced syllables with gliding pitch, formant shaping,
    /// unvoiced bursts and pauses.
    Speech,
    White,
    Pink,
    Sine(f64),
    /// 16-bit mono WAV at the scenario rate, looped or truncated.
    File(PathBuf),
}

impl Source {
    pub fn is_silent(&self) -> bool {
        matches!(self, Source::Silence)
    }

    pub fn generate(&self, seed: u64, stream: u64, rate: u32, len: usize) -> Result<Vec<f64>> {
        let mut rng = stream_rng(seed, stream);
        Ok(match self {
            Source::Silence => vec![0.0; len],
            Source::Speech => speech(&mut rng, rate, len),
            Source::White => white(&mut rng, len),
            Source::Pink => pink(&mut rng, len),
            Source::Sine(f) => {
                let phase = rng.gen_range(0.0..2.0 * PI);
                (0..len)
                    .map(|n| (2.0 * PI * f * n as f64 / rate as f64 + phase).sin())
                    .collect()
            }
            Source::File(path) => {
                let (r, x) = duplex_core::wav::read::<f64>(path).map_err(|e| Error::Source {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                if r != rate {
                    return Err(Error::Source {
                        path: path.clone(),
                        message: format!("{r} Hz, scenario is {rate} Hz"),
                    });
                }
                if x.is_empty() {
                    return Err(Error::Source { path: path.clone(), message: "empty".into() });
                }
                x.iter().cycle().take(len).copied().collect()
            }
        })
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Silence => write!(f, "silence"),
            Source::Speech => write!(f, "speech"),
            Source::White => write!(f, "white"),
            Source::Pink => write!(f, "pink"),
            Source::Sine(hz) => write!(f, "sine:{hz}"),
            Source::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(hz) = s.strip_prefix("sine:") {
            let hz: f64 = hz.trim().parse().map_err(|_| format!("bad frequency {hz:?}"))?;
            if !(hz > 0.0) {
                return Err(format!("frequency {hz} must be positive"));
            }
            return Ok(Source::Sine(hz));
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(Source::File(PathBuf::from(p.trim())));
        }
        match s {
            "silence" | "none" => Ok(Source::Silence),
            "speech" => Ok(Source::Speech),
            "white" => Ok(Source::White),
            "pink" => Ok(Source::Pink),
            _ => Err(format!("unknown source {s:?}")),
        }
    }
}

fn white(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// 1/f noise from a bank of first-order filters.
fn pink(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum::<f64>()
        + 0.05
}

fn speech(rng: &mut ChaCha8Rng, rate: u32, len: usize) -> Vec<f64> {
    let fs = rate as f64;
    let nyq = fs / 2.0;
    let mut out = vec![0.0; len];
    let mut pos = (rng.gen_range(0.0..0.15) * fs) as usize;
    while pos < len {
        let voiced = rng.gen_bool(0.8);
        let dur = (rng.gen_range(0.08..0.3) * fs) as usize;
        let end = (pos + dur).min(len);
        let span = (end - pos).max(1) as f64;
        if voiced {
            let f_start = rng.gen_range(100.0..240.0);
            let f_end = f_start * rng.gen_range(0.8..1.25);
            let formants = [
                (rng.gen_range(300.0..900.0), 120.0),
                (rng.gen_range(900.0..2500.0), 200.0),
                (rng.gen_range(2500.0..3800.0), 400.0),
            ];
            let mut phase = 0.0;
            for n in pos..end {
                let t = (n - pos) as f64 / span;
                let f0 = f_start + (f_end - f_start) * t;
                phase += 2.0 * PI * f0 / fs;
                let env = (PI * t).sin().powf(0.6);
                let mut v = 0.0;
                let mut h = 1;
                while h as f64 * f0 < nyq * 0.95 {
                    let fh = h as f64 * f0;
                    v += formant_gain(fh, &formants) / (h as f64).sqrt() * (h as f64 * phase).sin();
                    h += 1;
                }
                out[n] += env * v;
            }
            // breath noise under the voicing
            for n in pos..end {
                let t = (n - pos) as f64 / span;
                let w: f64 = StandardNormal.sample(rng);
                out[n] += 0.05 * (PI * t).sin() * w;
            }
        } else {
            // fricative: high-passed noise
            let mut prev = 0.0;
            for n in pos..end {
                let t = (n - pos) as f64 / span;
                let w: f64 = StandardNormal.sample(rng);
                out[n] += 0.4 * (PI * t).sin() * (w - prev);
                prev = w;
            }
        }
        pos = end + (rng.gen_range(0.03..0.35) * fs) as usize;
    }
    out
}
