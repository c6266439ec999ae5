//! Training-set export.
//!
//! One `.pnd` file per scenario: a 24-byte header followed by one record
//! per engine frame. All values little-endian.
//!
//! | offset | type     | field                        |
//! |--------|----------|------------------------------|
//! | 0      | [u8; 4]  | magic `PND1`                 |
//! | 4      | u32      | version (1)                  |
//! | 8      | u32      | sample rate                  |
//! | 12     | u32      | features per record (100)    |
//! | 16     | u32      | bands per record (32)        |
//! | 20     | u32      | record count                 |
//!
//! Record (229 f32): features, then for the frame the network's gains
//! apply to: clean band energies `X_b`, noisy band energies `Y_b`,
//! noisy-vs-comb coherence, clean-vs-comb coherence, pitch period in
//! samples.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use duplex_core::dsp::{Analyzer, BandLayout, SpectralFrame};
use duplex_core::model::IdentityPredictor;
use duplex_core::pipeline::{Engine, EngineConfig};
use duplex_core::pitch::{band_coherence, comb_filter, History, PitchTracker};
use duplex_core::{LOOKAHEAD_FRAMES, NB_BANDS, NB_FEATURES};

use crate::error::{Error, Result};
use crate::render::{random_cutoff, render, Rendered};
use crate::scenario::Scenario;

pub const MAGIC: &[u8; 4] = b"PND1";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;
pub const RECORD_FLOATS: usize = NB_FEATURES + 4 * NB_BANDS + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub features: Vec<f32>,
    pub clean_bands: Vec<f32>,
    pub noisy_bands: Vec<f32>,
    pub noisy_coherence: Vec<f32>,
    pub clean_coherence: Vec<f32>,
    pub period: f32,
}

impl Record {
    /// Ideal gains `sqrt(X_b / Y_b)` clamped to `[0, 1]`; one where the
    /// noisy band is empty.
    pub fn target_gains(&self) -> Vec<f32> {
        self.clean_bands
            .iter()
            .zip(&self.noisy_bands)
            .map(|(&x, &y)| if y > 0.0 { (x / y).sqrt().min(1.0) } else { 1.0 })
            .collect()
    }

    fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        let parts: [&[f32]; 5] = [
            &self.features,
            &self.clean_bands,
            &self.noisy_bands,
            &self.noisy_coherence,
            &self.clean_coherence,
        ];
        for p in parts {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&self.period.to_le_bytes())
    }

    fn parse(b: &[u8]) -> Self {
        let f: Vec<f32> = b
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut at = 0;
        let mut take = |n: usize| {
            let s = f[at..at + n].to_vec();
            at += n;
            s
        };
        Record {
            features: take(NB_FEATURES),
            clean_bands: take(NB_BANDS),
            noisy_bands: take(NB_BANDS),
            noisy_coherence: take(NB_BANDS),
            clean_coherence: take(NB_BANDS),
            period: take(1)[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub sample_rate: u32,
    pub records: Vec<Record>,
}

impl DatasetFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.records.len() * RECORD_FLOATS * 4);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.sample_rate, NB_FEATURES as u32, NB_BANDS as u32, self.records.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.records {
            r.write(&mut out).expect("writing to a vector");
        }
        out
    }

    pub fn from_bytes(b: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Dataset { path: path.to_path_buf(), message };
        if b.len() < HEADER_BYTES || &b[..4] != MAGIC {
            return Err(bad("not a PND1 file".into()));
        }
        let u = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        if u(4) != VERSION {
            return Err(bad(format!("version {}", u(4))));
        }
        if u(12) as usize != NB_FEATURES || u(16) as usize != NB_BANDS {
            return Err(bad(format!("{} features, {} bands", u(12), u(16))));
        }
        let n = u(20) as usize;
        let rec = RECORD_FLOATS * 4;
        if b.len() != HEADER_BYTES + n * rec {
            return Err(bad(format!("{} bytes for {n} records", b.len())));
        }
        let records = b[HEADER_BYTES..].chunks_exact(rec).map(Record::parse).collect();
        Ok(Self { sample_rate: u(8), records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path)?, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }
}

/// Runs the engine (unit gains, no comb) over a rendered scenario and pairs
/// each frame's features with the clean and noisy band data of the frame
/// its gains would apply to.
pub fn extract_records(r: &Rendered) -> Result<Vec<Record>> {
    let rate = r.sample_rate;
    let config = EngineConfig::new(rate);
    let hop = config.hop();
    let mut engine = Engine::<f32>::new(config, Box::new(IdentityPredictor))?;

    // clean side mirrors the engine's analysis of its own signal
    let pitch = PitchTracker::<f64>::new(rate, (LOOKAHEAD_FRAMES + 1) * hop);
    let comb_need = (LOOKAHEAD_FRAMES + 2) * hop + 2 * pitch.max_period();
    let mut history = History::<f64>::new(pitch.required_history().max(comb_need));
    let layout = BandLayout::<f64>::for_rate(rate, 2 * hop);
    let mut analyzer = Analyzer::<f64>::new(hop);
    let mut comb_analyzer = Analyzer::<f64>::new(hop);
    let mut spectra: VecDeque<SpectralFrame<f64>> = VecDeque::new();

    let frames = r.mic.len() / hop;
    let mut out = Vec::with_capacity(frames);
    let f32s = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    for t in 0..frames {
        let span = t * hop..(t + 1) * hop;
        let mic: Vec<f32> = r.mic[span.clone()].iter().map(|&v| v as f32).collect();
        let far: Vec<f32> = r.far[span.clone()].iter().map(|&v| v as f32).collect();
        engine.process_frame(&mic, &far)?;
        let trace = engine.trace();

        let clean = &r.target[span];
        history.push(clean);
        spectra.push_back(analyzer.analyze(clean)?);
        if spectra.len() > LOOKAHEAD_FRAMES + 1 {
            spectra.pop_front();
        }
        let current = if spectra.len() == LOOKAHEAD_FRAMES + 1 {
            spectra[0].clone()
        } else {
            SpectralFrame::zeros(hop + 1)
        };
        let hist = history.as_slice();
        let start = hist.len() - (LOOKAHEAD_FRAMES + 2) * hop;
        let comb = comb_analyzer.analyze_window(&comb_filter(hist, start, 2 * hop, trace.period))?;
        let clean_coherence = band_coherence(&current.bins, &comb.bins, &layout)?;

        out.push(Record {
            features: trace.features.clone(),
            clean_bands: f32s(&layout.band_energies(&current.bins)?),
            noisy_bands: trace.enhanced_bands.clone(),
            noisy_coherence: trace.coherence.clone(),
            clean_coherence: f32s(&clean_coherence),
            period: trace.period as f32,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportOptions {
    /// Draw a low-pass cutoff from the seed for scenarios without one.
    pub random_lowpass: bool,
    /// Also write the rendered microphone, far-end and target WAVs.
    pub write_wavs: bool,
}

/// Renders each scenario and writes `<name>.pnd` into `dir`. Returns the
/// written paths in scenario order.
pub fn export_dataset(scenarios: &[Scenario], dir: &Path, opts: &ExportOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let mut s = s.clone();
        if opts.random_lowpass && s.lowpass_hz.is_none() {
            s.lowpass_hz = Some(random_cutoff(s.seed, s.sample_rate));
        }
        let rendered = render(&s)?;
        let records = extract_records(&rendered)?;
        let path = dir.join(format!("{}.pnd", s.name));
        DatasetFile { sample_rate: s.sample_rate, records }
            .save(&path)
            .map_err(|e| match e {
                Error::Io(io) => Error::Dataset { path: path.clone(), message: io.to_string() },
                e => e,
            })?;
        if opts.write_wavs {
            rendered.write_wavs(dir, &s.name)?;
        }
        log::info!("exported {}", path.display());
        paths.push(path);
    }
    Ok(paths)
}
