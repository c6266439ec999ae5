//! 16-bit PCM mono WAV input and output.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Real, Result};

const FULL_SCALE: f64 = 32768.0;

fn mismatch(path: &Path, expected: String, found: String) -> Error {
    Error::WavFormat { path: path.to_path_buf(), expected, found }
}

fn check_spec(path: &Path, spec: &WavSpec, rate: Option<u32>) -> Result<()> {
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(mismatch(
            path,
            "16-bit integer PCM".into(),
            format!("{}-bit {:?}", spec.bits_per_sample, spec.sample_format),
        ));
    }
    if spec.channels != 1 {
        return Err(mismatch(path, "1 channel".into(), format!("{} channels", spec.channels)));
    }
    if let Some(r) = rate {
        if spec.sample_rate != r {
            return Err(mismatch(path, format!("{r} Hz"), format!("{} Hz", spec.sample_rate)));
        }
    }
    Ok(())
}

/// Streaming reader yielding samples scaled to `[-1, 1)`.
pub struct WavSource {
    path: PathBuf,
    reader: WavReader<BufReader<File>>,
    rate: u32,
    remaining: u32,
}

impl WavSource {
    /// Opens `path`, requiring 16-bit mono and, if given, the sample rate.
    pub fn open(path: impl AsRef<Path>, rate: Option<u32>) -> Result<Self> {
        let path = path.as_ref();
        let reader = WavReader::open(path)?;
        let spec = reader.spec();
        check_spec(path, &spec, rate)?;
        Ok(Self {
            path: path.to_path_buf(),
            remaining: reader.len(),
            rate: spec.sample_rate,
            reader,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.rate
    }

    /// Samples not yet read.
    pub fn remaining(&self) -> usize {
        self.remaining as usize
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Fills `out` and zero-pads past the end; returns the number of real
    /// samples read.
    pub fn read_frame<T: Real>(&mut self, out: &mut [T]) -> Result<usize> {
        let mut n = 0;
        let mut samples = self.reader.samples::<i16>();
        for slot in out.iter_mut() {
            match samples.next() {
                Some(s) => {
                    *slot = T::lit(s? as f64 / FULL_SCALE);
                    n += 1;
                }
                None => *slot = T::zero(),
            }
        }
        self.remaining -= n as u32;
        Ok(n)
    }
}

/// Streaming 16-bit mono writer with rounding and saturation.
pub struct WavSink {
    writer: WavWriter<std::io::BufWriter<File>>,
}

impl WavSink {
    pub fn create(path: impl AsRef<Path>, rate: u32) -> Result<Self> {
        let spec = WavSpec {
            channels: 1,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        Ok(Self { writer: WavWriter::create(path, spec)? })
    }

    pub fn write<T: Real>(&mut self, samples: &[T]) -> Result<()> {
        for &s in samples {
            self.writer.write_sample(to_i16(s.to_f64_lossy()))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        self.writer.finalize()?;
        Ok(())
    }
}

pub fn to_i16(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Reads a whole file.
pub fn read<T: Real>(path: impl AsRef<Path>) -> Result<(u32, Vec<T>)> {
    let mut src = WavSource::open(path, None)?;
    let mut out = vec![T::zero(); src.remaining()];
    src.read_frame(&mut out)?;
    Ok((src.sample_rate(), out))
}

/// Writes a whole file.
pub fn write<T: Real>(path: impl AsRef<Path>, rate: u32, samples: &[T]) -> Result<()> {
    let mut sink = WavSink::create(path, rate)?;
    sink.write(samples)?;
    sink.finish()
}
