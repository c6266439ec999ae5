//! Streaming engine: delay, echo cancellation, features, network, enhancement.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::aec::EchoCanceller;
use crate::delay::DelayEstimator;
use crate::dsp::{all_finite, energy, Analyzer, BandLayout, SpectralFrame, Synthesizer};
use crate::enhance::{apply_gains, final_gains, mix_comb, EnhancementParams};
use crate::features::{FeatureExtractor, FeatureInputs};
use crate::model::{BandPredictor, IdentityPredictor, ModelWeights, Network};
use crate::pitch::{band_coherence, comb_filter, History, PitchTracker};
use crate::wav::{WavSink, WavSource};
use crate::{Error, Real, Result, LOOKAHEAD_FRAMES, NB_BANDS, NB_FEATURES};

/// Frames per second; the hop is 10 ms at every rate.
pub const FRAMES_PER_SECOND: u32 = 100;

/// Output ERLE* when the output is digital silence.
pub const ERLE_CAP_DB: f64 = 80.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub sample_rate: u32,
    pub model_path: Option<PathBuf>,
    /// Run only the echo canceller; band gains are fixed at one.
    pub aec_only: bool,
    /// Skip delay estimation and echo cancellation.
    pub res_only: bool,
    pub enhancement: EnhancementParams,
    /// The far end is delayed by the estimate minus this much, so taps just
    /// before the estimated peak stay inside the filter.
    pub delay_margin_ms: f64,
    pub stats_path: Option<PathBuf>,
    pub dump_features: Option<PathBuf>,
}

impl EngineConfig {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            model_path: None,
            aec_only: false,
            res_only: false,
            enhancement: EnhancementParams::default(),
            delay_margin_ms: 2.0,
            stats_path: None,
            dump_features: None,
        }
    }

    pub fn hop(&self) -> usize {
        (self.sample_rate / FRAMES_PER_SECOND) as usize
    }

    /// Look-ahead frames; fixed.
    pub fn lookahead(&self) -> usize {
        LOOKAHEAD_FRAMES
    }

    /// Shift between an input sample and its output: look-ahead plus the
    /// overlap-add hop.
    pub fn output_shift(&self) -> usize {
        (LOOKAHEAD_FRAMES + 1) * self.hop()
    }

    /// Algorithmic delay: the output shift plus one hop of frame buffering.
    pub fn algorithmic_delay_ms(&self) -> f64 {
        ((LOOKAHEAD_FRAMES + 2) * 1000) as f64 / FRAMES_PER_SECOND as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != 16_000 && self.sample_rate != 48_000 {
            return Err(Error::Config(format!(
                "sample rate {} not supported; use 16000 or 48000",
                self.sample_rate
            )));
        }
        if self.aec_only && self.res_only {
            return Err(Error::Config("aec-only and res-only are exclusive".into()));
        }
        if !(self.delay_margin_ms >= 0.0 && self.delay_margin_ms < 50.0) {
            return Err(Error::Config(format!("delay margin {} ms", self.delay_margin_ms)));
        }
        self.enhancement.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StreamStats {
    pub erle_star_db: f64,
    pub rtf: f64,
    pub delay_ms: f64,
    pub frames: u64,
    pub nan_frames: u64,
}

impl StreamStats {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// `10 log10(sum d^2 / sum x^2)`, capped at [`ERLE_CAP_DB`].
///
/// `shift` is the number of samples the output lags the input; only the
/// overlapping span is used.
pub fn erle_star<T: Real>(input: &[T], output: &[T], shift: usize) -> f64 {
    let n = input.len().min(output.len().saturating_sub(shift));
    let d: f64 = input[..n].iter().map(|v| v.to_f64_lossy().powi(2)).sum();
    let x: f64 = output[shift..shift + n].iter().map(|v| v.to_f64_lossy().powi(2)).sum();
    erle_from_energies(d, x)
}

fn erle_from_energies(d: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if d > 0.0 { ERLE_CAP_DB } else { 0.0 };
    }
    (10.0 * (d / x).log10()).min(ERLE_CAP_DB)
}

/// Quantities from the most recent frame, for dataset export and probes.
#[derive(Debug, Clone, Default)]
pub struct FrameTrace<T> {
    /// Network input computed this frame.
    pub features: Vec<T>,
    /// Band energies of the frame being enhanced (`LOOKAHEAD_FRAMES` old).
    pub enhanced_bands: Vec<T>,
    /// Pitch coherence of that frame.
    pub coherence: Vec<T>,
    pub period: usize,
    pub gains: Vec<T>,
    pub strengths: Vec<T>,
}

/// One stream's state machine.
pub struct Engine<T: Real> {
    config: EngineConfig,
    hop: usize,
    layout: BandLayout<T>,
    delay: Option<DelayEstimator<T>>,
    aec: Option<EchoCanceller<T>>,
    mic_analyzer: Analyzer<T>,
    far_analyzer: Analyzer<T>,
    comb_analyzer: Analyzer<T>,
    synthesizer: Synthesizer<T>,
    history: History<T>,
    pitch: PitchTracker<T>,
    features: FeatureExtractor<T>,
    predictor: Box<dyn BandPredictor>,
    spectra: VecDeque<SpectralFrame<T>>,
    input_energy: VecDeque<f64>,
    window: Vec<T>,
    trace: FrameTrace<T>,
    feature_sink: Option<Box<dyn Write + Send>>,
    input_total: f64,
    output_total: f64,
    frames: u64,
    nan_frames: u64,
    busy: f64,
    applied_delay: Option<usize>,
}

impl<T: Real> Engine<T> {
    /// Engine with an explicit predictor.
    pub fn new(config: EngineConfig, predictor: Box<dyn BandPredictor>) -> Result<Self> {
        config.validate()?;
        let rate = config.sample_rate;
        let hop = config.hop();
        let (delay, aec) = if config.res_only {
            (None, None)
        } else {
            (Some(DelayEstimator::new(rate)?), Some(EchoCanceller::for_rate(rate)?))
        };
        let pitch = PitchTracker::new(rate, (LOOKAHEAD_FRAMES + 1) * hop);
        // the comb for the enhanced frame reaches two periods back from its
        // window, which starts `LOOKAHEAD_FRAMES + 2` hops before the end
        let comb_need = (LOOKAHEAD_FRAMES + 2) * hop + 2 * pitch.max_period();
        let history = History::new(pitch.required_history().max(comb_need));
        Ok(Self {
            layout: BandLayout::for_rate(rate, 2 * hop),
            delay,
            aec,
            mic_analyzer: Analyzer::new(hop),
            far_analyzer: Analyzer::new(hop),
            comb_analyzer: Analyzer::new(hop),
            synthesizer: Synthesizer::new(hop),
            history,
            pitch,
            features: FeatureExtractor::new(2 * hop),
            predictor,
            spectra: VecDeque::with_capacity(LOOKAHEAD_FRAMES + 1),
            input_energy: VecDeque::with_capacity(LOOKAHEAD_FRAMES + 2),
            window: vec![T::zero(); 2 * hop],
            trace: FrameTrace::default(),
            feature_sink: None,
            input_total: 0.0,
            output_total: 0.0,
            frames: 0,
            nan_frames: 0,
            busy: 0.0,
            applied_delay: None,
            hop,
            config,
        })
    }

    /// Engine for shared weights.
    pub fn with_weights(config: EngineConfig, weights: Arc<ModelWeights>) -> Result<Self> {
        if weights.sample_rate != config.sample_rate {
            return Err(Error::Config(format!(
                "model is for {} Hz, stream is {} Hz",
                weights.sample_rate, config.sample_rate
            )));
        }
        if weights.n_outputs() != NB_BANDS {
            return Err(Error::Config(format!(
                "model produces {} bands, engine uses {NB_BANDS}",
                weights.n_outputs()
            )));
        }
        Self::new(config, Box::new(Network::new(weights)))
    }

    /// Loads `config.model_path` if set; otherwise unit gains.
    pub fn from_config(config: EngineConfig) -> Result<Self> {
        let mut engine = match &config.model_path {
            Some(p) => {
                let w = ModelWeights::load(p)?;
                log::info!("loaded {} with {} non-zero weights", p.display(), w.nonzeros());
                Self::with_weights(config.clone(), Arc::new(w))?
            }
            None => {
                log::warn!("no model given; band gains fixed at one");
                Self::new(config.clone(), Box::new(IdentityPredictor))?
            }
        };
        if let Some(p) = &config.dump_features {
            let f = std::fs::File::create(p)?;
            engine.feature_sink = Some(Box::new(std::io::BufWriter::new(f)));
        }
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn layout(&self) -> &BandLayout<T> {
        &self.layout
    }

    pub fn echo_canceller(&self) -> Option<&EchoCanceller<T>> {
        self.aec.as_ref()
    }

    pub fn delay_estimator(&self) -> Option<&DelayEstimator<T>> {
        self.delay.as_ref()
    }

    pub fn trace(&self) -> &FrameTrace<T> {
        &self.trace
    }

    /// Writes every feature vector as 100 little-endian `f32`.
    pub fn set_feature_sink(&mut self, sink: Box<dyn Write + Send>) {
        self.feature_sink = Some(sink);
    }

    /// Changes the stage bypasses; only allowed before the first frame.
    pub fn set_bypass(&mut self, aec_only: bool, res_only: bool) -> Result<()> {
        if self.frames > 0 {
            return Err(Error::ConfigImmutable);
        }
        let mut config = self.config.clone();
        config.aec_only = aec_only;
        config.res_only = res_only;
        config.validate()?;
        if res_only != self.config.res_only {
            if res_only {
                self.delay = None;
                self.aec = None;
            } else {
                self.delay = Some(DelayEstimator::new(config.sample_rate)?);
                self.aec = Some(EchoCanceller::for_rate(config.sample_rate)?);
            }
        }
        self.config = config;
        Ok(())
    }

    pub fn stats(&self) -> StreamStats {
        let audio = self.frames as f64 * self.hop as f64 / self.config.sample_rate as f64;
        StreamStats {
            erle_star_db: erle_from_energies(self.input_total, self.output_total),
            rtf: if audio > 0.0 { self.busy / audio } else { 0.0 },
            delay_ms: self.delay.as_ref().map_or(0.0, |d| d.delay_ms()),
            frames: self.frames,
            nan_frames: self.nan_frames,
        }
    }

    /// Processes one hop of microphone and far-end audio and returns one hop
    /// of output, [`EngineConfig::output_shift`] samples behind the input.
    pub fn process_frame(&mut self, mic: &[T], far: &[T]) -> Result<Vec<T>> {
        for x in [mic, far] {
            if x.len() != self.hop {
                return Err(Error::FrameLength { expected: self.hop, found: x.len() });
            }
        }
        let start = Instant::now();
        let out = match self.step(mic, far) {
            Ok(Some(out)) => out,
            Ok(None) => {
                self.nan_frames += 1;
                vec![T::zero(); self.hop]
            }
            Err(e) => return Err(e),
        };
        self.busy += start.elapsed().as_secs_f64();
        self.frames += 1;
        // ERLE* pairs each output hop with the input it was produced from
        self.input_energy.push_back(energy(mic).to_f64_lossy());
        if self.input_energy.len() > LOOKAHEAD_FRAMES + 1 {
            let d = self.input_energy.pop_front().unwrap_or(0.0);
            self.input_total += d;
            self.output_total += energy(&out).to_f64_lossy();
        }
        Ok(out)
    }

    /// `None` signals a non-finite intermediate.
    fn step(&mut self, mic: &[T], far: &[T]) -> Result<Option<Vec<T>>> {
        let finite_in = all_finite(mic) && all_finite(far);
        let zeros = vec![T::zero(); self.hop];
        let (mic, far) = if finite_in { (mic, far) } else { (&zeros[..], &zeros[..]) };

        let y = match (&mut self.delay, &mut self.aec) {
            (Some(delay), Some(aec)) => {
                let d = delay.update(mic, far)?;
                let margin = (self.config.delay_margin_ms * self.config.sample_rate as f64 / 1000.0)
                    .round() as usize;
                let applied = d.saturating_sub(margin);
                if let Some(prev) = self.applied_delay.replace(applied) {
                    if prev != applied {
                        aec.shift_taps(applied as isize - prev as isize);
                    }
                }
                let delayed = delay.delayed_far_by(far, applied);
                aec.process_frame(mic, &delayed)?.output
            }
            _ => mic.to_vec(),
        };
        let finite_y = all_finite(&y);
        let y = if finite_y { y } else { zeros.clone() };

        let hop = self.hop;
        self.window.copy_within(hop.., 0);
        self.window[hop..].copy_from_slice(&y);
        let spec_y = self.mic_analyzer.analyze(&y)?;
        let spec_f = self.far_analyzer.analyze(far)?;
        self.history.push(&y);
        let mic_bands = self.layout.band_energies(&spec_y.bins)?;
        let far_bands = self.layout.band_energies(&spec_f.bins)?;
        self.spectra.push_back(spec_y);
        if self.spectra.len() > LOOKAHEAD_FRAMES + 1 {
            self.spectra.pop_front();
        }
        // the frame being enhanced; zeros until the look-ahead has filled
        let current = if self.spectra.len() == LOOKAHEAD_FRAMES + 1 {
            self.spectra[0].clone()
        } else {
            SpectralFrame::zeros(hop + 1)
        };

        let hist = self.history.as_slice();
        let est = self.pitch.search(hist)?;
        let start = hist.len() - (LOOKAHEAD_FRAMES + 2) * hop;
        let comb_time = comb_filter(hist, start, 2 * hop, est.period);
        let comb = self.comb_analyzer.analyze_window(&comb_time)?;
        let coherence = band_coherence(&current.bins, &comb.bins, &self.layout)?;

        let features = self.features.build(&FeatureInputs {
            mic_bands: &mic_bands,
            far_bands: &far_bands,
            coherence: &coherence,
            period: self.pitch.normalized_period(est.period),
            correlation: est.correlation,
            window: &self.window,
        });
        let f32s: Vec<f32> = features.iter().map(|v| v.to_f32_lossy()).collect();
        if let Some(sink) = &mut self.feature_sink {
            let mut bytes = Vec::with_capacity(4 * NB_FEATURES);
            for v in &f32s {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            sink.write_all(&bytes)?;
        }

        let (gains, strengths) = if self.config.aec_only {
            (vec![T::one(); NB_BANDS], vec![T::zero(); NB_BANDS])
        } else if f32s.iter().all(|v| v.is_finite()) {
            let (g, r) = self.predictor.predict(&f32s)?;
            (
                g.iter().map(|&v| T::lit(v as f64)).collect::<Vec<T>>(),
                r.iter().map(|&v| T::lit(v as f64)).collect::<Vec<T>>(),
            )
        } else {
            (vec![T::zero(); NB_BANDS], vec![T::zero(); NB_BANDS])
        };

        let params = &self.config.enhancement;
        let mixed = if params.comb && !self.config.aec_only {
            mix_comb(&current, &comb, &strengths, &self.layout)?
        } else {
            current.clone()
        };
        let enhanced_bands = self.layout.band_energies(&mixed.bins)?;
        let g = if self.config.aec_only {
            gains.clone()
        } else {
            final_gains(&gains, &enhanced_bands, params)
        };
        let shaped = apply_gains(&mixed, &g, &self.layout)?;
        let ok = finite_in
            && finite_y
            && f32s.iter().all(|v| v.is_finite())
            && shaped.bins.iter().all(|b| b.re.is_finite() && b.im.is_finite());
        let out = if ok {
            self.synthesizer.synthesize(&shaped)?
        } else {
            self.synthesizer.synthesize(&SpectralFrame::zeros(hop + 1))?
        };

        self.trace = FrameTrace {
            features,
            enhanced_bands,
            coherence,
            period: est.period,
            gains,
            strengths,
        };
        Ok(if ok && all_finite(&out) { Some(out) } else { None })
    }

    /// Flushes the feature sink.
    pub fn finish(&mut self) -> Result<()> {
        if let Some(sink) = &mut self.feature_sink {
            sink.flush()?;
        }
        Ok(())
    }
}

/// Runs the engine over two WAV files and writes the output file.
///
/// Both inputs must be 16-bit mono at the configured rate; the shorter one
/// is padded with zeros. The output has the length of the longer input and
/// carries the engine's output shift.
pub fn process_files(
    mic: impl AsRef<Path>,
    far: impl AsRef<Path>,
    out: impl AsRef<Path>,
    config: &EngineConfig,
) -> Result<StreamStats> {
    let mut engine = Engine::<f32>::from_config(config.clone())?;
    run_files(&mut engine, mic.as_ref(), far.as_ref(), out.as_ref())
}

/// [`process_files`] with a caller-built engine.
pub fn run_files<T: Real>(engine: &mut Engine<T>, mic: &Path, far: &Path, out: &Path) -> Result<StreamStats> {
    let rate = engine.config().sample_rate;
    let mut mic_src = WavSource::open(mic, Some(rate))?;
    let mut far_src = WavSource::open(far, Some(rate))?;
    let total = mic_src.remaining().max(far_src.remaining());
    let mut sink = WavSink::create(out, rate)?;
    let hop = engine.hop();
    let mut m = vec![T::zero(); hop];
    let mut f = vec![T::zero(); hop];
    let mut written = 0;
    while written < total {
        mic_src.read_frame(&mut m)?;
        far_src.read_frame(&mut f)?;
        let y = engine.process_frame(&m, &f)?;
        let n = hop.min(total - written);
        sink.write(&y[..n])?;
        written += n;
    }
    sink.finish()?;
    engine.finish()?;
    let stats = engine.stats();
    if let Some(p) = &engine.config().stats_path {
        stats.write_json(p)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erle_definition() {
        let d: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64 - 50.0) / 100.0).collect();
        assert_eq!(erle_star(&d, &d, 0), 0.0);
        let x: Vec<f64> = d.iter().map(|v| v / 10.0).collect();
        assert!((erle_star(&d, &x, 0) - 20.0).abs() < 1e-12);
        assert_eq!(erle_star(&d, &vec![0.0; 1000], 0), ERLE_CAP_DB);
        let mut shifted = vec![0.0; 10];
        shifted.extend(&x);
        assert!((erle_star(&d, &shifted, 10) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::new(16_000).validate().is_ok());
        assert!(EngineConfig::new(44_100).validate().is_err());
        let mut c = EngineConfig::new(16_000);
        c.aec_only = true;
        c.res_only = true;
        assert!(c.validate().is_err());
    }

    #[test]
    fn latency_accounting() {
        let c = EngineConfig::new(16_000);
        assert_eq!(c.output_shift(), 480);
        assert_eq!(c.algorithmic_delay_ms(), 40.0);
        assert_eq!(EngineConfig::new(48_000).output_shift(), 1440);
    }

    #[test]
    fn bypass_is_frozen_after_first_frame() {
        let mut e = Engine::<f32>::new(EngineConfig::new(16_000), Box::new(IdentityPredictor)).unwrap();
        e.set_bypass(true, false).unwrap();
        e.process_frame(&[0.0; 160], &[0.0; 160]).unwrap();
        assert!(matches!(e.set_bypass(false, false), Err(Error::ConfigImmutable)));
    }
}
