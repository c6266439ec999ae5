use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use duplex_core::pipeline::{process_files, EngineConfig, StreamStats};
use duplex_core::wav::WavSource;

fn parse_rate(s: &str) -> Result<u32, String> {
    match s {
        "16000" => Ok(16_000),
        "48000" => Ok(48_000),
        _ => Err(format!("{s}: expected 16000 or 48000")),
    }
}

/// Cancels echo and suppresses residual echo, noise and reverberation in a
/// microphone recording given the far-end reference.
#[derive(Debug, Clone, Parser)]
#[command(name = "enhance", version)]
pub struct EnhanceArgs {
    /// Microphone WAV (16-bit PCM mono).
    #[arg(long)]
    pub mic: PathBuf,
    /// Far-end reference WAV (16-bit PCM mono).
    #[arg(long)]
    pub far: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// PNW1 weight file; optional with --aec-only.
    #[arg(long, required_unless_present = "aec_only")]
    pub model: Option<PathBuf>,
    /// Stream rate; taken from the microphone file when omitted.
    #[arg(long, value_parser = parse_rate)]
    pub rate: Option<u32>,
    /// Echo canceller only, band gains fixed at one.
    #[arg(long, conflicts_with = "res_only")]
    pub aec_only: bool,
    /// Skip delay estimation and echo cancellation.
    #[arg(long)]
    pub res_only: bool,
    #[arg(long)]
    pub no_postfilter: bool,
    /// Write every feature vector as 100 little-endian f32.
    #[arg(long, value_name = "PATH")]
    pub dump_features: Option<PathBuf>,
    /// Write the stream statistics as JSON.
    #[arg(long, value_name = "JSON")]
    pub stats: Option<PathBuf>,
}

impl EnhanceArgs {
    pub fn config(&self) -> anyhow::Result<EngineConfig> {
        let rate = match self.rate {
            Some(r) => r,
            None => WavSource::open(&self.mic, None)?.sample_rate(),
        };
        let mut c = EngineConfig::new(rate);
        c.model_path = self.model.clone();
        c.aec_only = self.aec_only;
        c.res_only = self.res_only;
        c.enhancement.postfilter = !self.no_postfilter;
        c.dump_features = self.dump_features.clone();
        c.stats_path = self.stats.clone();
        c.validate()?;
        Ok(c)
    }
}

pub fn run(args: &EnhanceArgs) -> anyhow::Result<StreamStats> {
    let config = args.config()?;
    process_files(&args.mic, &args.far, &args.out, &config)
        .with_context(|| format!("processing {} with {}", args.mic.display(), args.far.display()))
}

pub fn summary(s: &StreamStats) -> String {
    format!(
        "erle_star_db={:.2} rtf={:.4} delay_ms={:.1} frames={} nan_frames={}",
        s.erle_star_db, s.rtf, s.delay_ms, s.frames, s.nan_frames
    )
}
