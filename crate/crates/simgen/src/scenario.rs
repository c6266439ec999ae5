//! Scenario description and its key-value text format.
//!
//! One scenario per stanza; stanzas are separated by blank lines. Each line
//! is `key = value`; `#` starts a comment. Unknown keys are errors.
//!
//! ```text
//! name = dt_01
//! seed = 7
//! near = speech
//! far = speech
//! snr_db = 20
//! echo_ratio_db = 10
//! delay_ms = 160
//! clip = hard:0.05
//! ```

use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::rir::RT60_RANGE;
use crate::source::Source;

pub const SNR_RANGE: (f64, f64) = (-15.0, 45.0);
pub const ECHO_RATIO_RANGE: (f64, f64) = (-15.0, 35.0);
pub const EARLY_GAIN_RANGE: (f64, f64) = (0.5, 1.5);
pub const MAX_DELAY_MS: f64 = 1000.0;

/// Loudspeaker nonlinearity applied to the far end before the echo path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clip {
    None,
    /// Hard clip at the given absolute level.
    Hard(f64),
    /// `level * tanh(x / level)`.
    Soft(f64),
}

impl Clip {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Clip::None => x,
            Clip::Hard(l) => x.clamp(-l, l),
            Clip::Soft(l) => l * (x / l).tanh(),
        }
    }
}

impl fmt::Display for Clip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clip::None => write!(f, "none"),
            Clip::Hard(l) => write!(f, "hard:{l}"),
            Clip::Soft(l) => write!(f, "soft:{l}"),
        }
    }
}

fn parse_clip(v: &str) -> Result<Clip, String> {
    if v == "none" {
        return Ok(Clip::None);
    }
    let (kind, level) = v.split_once(':').ok_or_else(|| format!("bad clip {v:?}"))?;
    let level: f64 = level.trim().parse().map_err(|_| format!("bad clip level {level:?}"))?;
    if !(level > 0.0) {
        return Err(format!("clip level {level} must be positive"));
    }
    match kind.trim() {
        "hard" => Ok(Clip::Hard(level)),
        "soft" => Ok(Clip::Soft(level)),
        k => Err(format!("unknown clip kind {k:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub near: Source,
    pub far: Source,
    pub noise: Source,
    /// Loaded responses replace the synthetic ones.
    pub near_rir: Option<PathBuf>,
    pub far_rir: Option<PathBuf>,
    pub rt60_near: f64,
    pub rt60_far: f64,
    pub near_rir_ms: f64,
    pub far_rir_ms: f64,
    /// `None` turns the noise off.
    pub snr_db: Option<f64>,
    /// Echo-to-near-end ratio; `None` turns the echo off.
    pub echo_ratio_db: Option<f64>,
    pub delay_ms: f64,
    pub early_gain: f64,
    pub clip: Clip,
    /// Active-segment RMS of the near-end speech, dBFS. With a silent near
    /// end it is the reference for the echo and noise levels.
    pub level_dbfs: f64,
    /// Active-segment RMS of the far-end signal, dBFS.
    pub far_level_dbfs: f64,
    /// Low-pass applied to every microphone component and the target.
    pub lowpass_hz: Option<f64>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            sample_rate: 16_000,
            duration_s: 4.0,
            near: Source::Speech,
            far: Source::Speech,
            noise: Source::White,
            near_rir: None,
            far_rir: None,
            rt60_near: 0.3,
            rt60_far: 0.25,
            near_rir_ms: 300.0,
            far_rir_ms: 120.0,
            snr_db: Some(20.0),
            echo_ratio_db: Some(0.0),
            delay_ms: 40.0,
            early_gain: 1.0,
            clip: Clip::None,
            level_dbfs: -26.0,
            far_level_dbfs: -20.0,
            lowpass_hz: None,
        }
    }

    pub fn len(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Invalid { name: self.name.clone(), message };
        let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(bad(format!("name {:?} is not a plain file stem", self.name)));
        }
        if self.sample_rate != 16_000 && self.sample_rate != 48_000 {
            return Err(bad(format!("sample rate {}", self.sample_rate)));
        }
        if !(self.duration_s > 0.0 && self.duration_s <= 3600.0) {
            return Err(bad(format!("duration {} s", self.duration_s)));
        }
        for (what, v) in [("rt60_near", self.rt60_near), ("rt60_far", self.rt60_far)] {
            if !in_range(v, RT60_RANGE) {
                return Err(bad(format!("{what} {v} outside {RT60_RANGE:?}")));
            }
        }
        for (what, v) in [("near_rir_ms", self.near_rir_ms), ("far_rir_ms", self.far_rir_ms)] {
            if !(v >= 1.0 && v <= 2000.0) {
                return Err(bad(format!("{what} {v}")));
            }
        }
        if let Some(s) = self.snr_db {
            if !in_range(s, SNR_RANGE) {
                return Err(bad(format!("snr {s} dB outside {SNR_RANGE:?}")));
            }
        }
        if let Some(e) = self.echo_ratio_db {
            if !in_range(e, ECHO_RATIO_RANGE) {
                return Err(bad(format!("echo ratio {e} dB outside {ECHO_RATIO_RANGE:?}")));
            }
        }
        if !in_range(self.delay_ms, (0.0, MAX_DELAY_MS)) {
            return Err(bad(format!("delay {} ms", self.delay_ms)));
        }
        if !in_range(self.early_gain, EARLY_GAIN_RANGE) {
            return Err(bad(format!("early gain {} outside {EARLY_GAIN_RANGE:?}", self.early_gain)));
        }
        for (what, v) in [("level_dbfs", self.level_dbfs), ("far_level_dbfs", self.far_level_dbfs)] {
            if !(v <= 0.0 && v >= -80.0) {
                return Err(bad(format!("{what} {v}")));
            }
        }
        if let Some(f) = self.lowpass_hz {
            if !(f > 0.0 && f < self.sample_rate as f64 / 2.0) {
                return Err(bad(format!("low-pass cutoff {f} Hz")));
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num(v: &str) -> Result<f64, String> {
            v.parse::<f64>().map_err(|_| format!("bad number {v:?}"))
        }
        fn optional(v: &str, off: &str) -> Result<Option<f64>, String> {
            if v == off { Ok(None) } else { num(v).map(Some) }
        }
        match key {
            "name" => self.name = value.to_string(),
            "seed" => self.seed = value.parse().map_err(|_| format!("bad seed {value:?}"))?,
            "rate" | "sample_rate" => {
                self.sample_rate = value.parse().map_err(|_| format!("bad rate {value:?}"))?
            }
            "duration_s" => self.duration_s = num(value)?,
            "near" => self.near = value.parse()?,
            "far" => self.far = value.parse()?,
            "noise" => self.noise = value.parse()?,
            "near_rir" => self.near_rir = Some(PathBuf::from(value)),
            "far_rir" => self.far_rir = Some(PathBuf::from(value)),
            "rt60_near" => self.rt60_near = num(value)?,
            "rt60_far" => self.rt60_far = num(value)?,
            "near_rir_ms" => self.near_rir_ms = num(value)?,
            "far_rir_ms" => self.far_rir_ms = num(value)?,
            "snr_db" => self.snr_db = optional(value, "inf")?,
            "echo_ratio_db" => self.echo_ratio_db = optional(value, "off")?,
            "delay_ms" => self.delay_ms = num(value)?,
            "early_gain" => self.early_gain = num(value)?,
            "clip" => self.clip = parse_clip(value)?,
            "level_dbfs" => self.level_dbfs = num(value)?,
            "far_level_dbfs" => self.far_level_dbfs = num(value)?,
            "lowpass_hz" => self.lowpass_hz = optional(value, "off")?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>, off: &str| v.map_or(off.to_string(), |x| x.to_string());
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "rate = {}", self.sample_rate)?;
        writeln!(f, "duration_s = {}", self.duration_s)?;
        writeln!(f, "near = {}", self.near)?;
        writeln!(f, "far = {}", self.far)?;
        writeln!(f, "noise = {}", self.noise)?;
        if let Some(p) = &self.near_rir {
            writeln!(f, "near_rir = {}", p.display())?;
        }
        if let Some(p) = &self.far_rir {
            writeln!(f, "far_rir = {}", p.display())?;
        }
        writeln!(f, "rt60_near = {}", self.rt60_near)?;
        writeln!(f, "rt60_far = {}", self.rt60_far)?;
        writeln!(f, "near_rir_ms = {}", self.near_rir_ms)?;
        writeln!(f, "far_rir_ms = {}", self.far_rir_ms)?;
        writeln!(f, "snr_db = {}", opt(self.snr_db, "inf"))?;
        writeln!(f, "echo_ratio_db = {}", opt(self.echo_ratio_db, "off"))?;
        writeln!(f, "delay_ms = {}", self.delay_ms)?;
        writeln!(f, "early_gain = {}", self.early_gain)?;
        writeln!(f, "clip = {}", self.clip)?;
        writeln!(f, "level_dbfs = {}", self.level_dbfs)?;
        writeln!(f, "far_level_dbfs = {}", self.far_level_dbfs)?;
        writeln!(f, "lowpass_hz = {}", opt(self.lowpass_hz, "off"))
    }
}

/// Parses every stanza of a scenario file. Each stanza starts from
/// [`Scenario::new`] defaults; `name` defaults to `scenario_<index>` and
/// `seed` to the stanza index.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    let mut current: Option<Scenario> = None;
    let finish = |s: Option<Scenario>, out: &mut Vec<Scenario>| -> Result<()> {
        if let Some(s) = s {
            s.validate()?;
            out.push(s);
        }
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if raw.trim().is_empty() {
                finish(current.take(), &mut out)?;
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key = value, got {line:?}") })?;
        let index = out.len();
        let s = current.get_or_insert_with(|| Scenario::new(format!("scenario_{index}"), index as u64));
        s.set(key.trim(), value.trim())
            .map_err(|message| Error::Parse { line: i + 1, message })?;
    }
    finish(current, &mut out)?;
    Ok(out)
}

/// Writes scenarios as stanzas that [`parse_scenarios`] reads back.
pub fn format_scenarios(scenarios: &[Scenario]) -> String {
    scenarios.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let s = parse_scenarios("seed = 9\nsnr_db = inf\n\n# second\nname = b\necho_ratio_db = off\nclip = soft:0.1\n")
            .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].name, "scenario_0");
        assert_eq!(s[0].seed, 9);
        assert_eq!(s[0].snr_db, None);
        assert_eq!(s[1].name, "b");
        assert_eq!(s[1].seed, 1);
        assert_eq!(s[1].echo_ratio_db, None);
        assert_eq!(s[1].clip, Clip::Soft(0.1));
    }

    #[test]
    fn text_round_trip() {
        let mut a = Scenario::new("a", 3);
        a.far = Source::Sine(440.0);
        a.clip = Clip::Hard(0.05);
        a.lowpass_hz = Some(4000.0);
        a.far_rir = Some(PathBuf::from("rooms/x.wav"));
        let b = Scenario::new("b", 4);
        let text = format_scenarios(&[a.clone(), b.clone()]);
        assert_eq!(parse_scenarios(&text).unwrap(), vec![a, b]);
    }

    #[test]
    fn errors_name_the_line() {
        match parse_scenarios("seed = 1\nbogus = 2\n") {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("bogus")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_scenarios("just words"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ranges_are_enforced() {
        for bad in ["snr_db = 50", "snr_db = -16", "echo_ratio_db = 36", "early_gain = 0.4", "rt60_far = 2", "rate = 44100"] {
            assert!(
                matches!(parse_scenarios(bad), Err(Error::Invalid { .. })),
                "{bad}"
            );
        }
        for good in ["snr_db = -15", "snr_db = 45", "echo_ratio_db = -15", "echo_ratio_db = 35", "early_gain = 1.5"] {
            assert!(parse_scenarios(good).is_ok(), "{good}");
        }
    }
}
