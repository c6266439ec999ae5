//! Linear echo cancellation.

mod control;
mod mdf;
mod twopath;

use std::io::Write;

use num_complex::Complex;

pub use control::AdaptationControl;
pub use mdf::{MdfFilter, Path};
pub use twopath::{PathDecision, TwoPath};

use crate::dsp::{all_finite, energy};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AecConfig {
    pub block_len: usize,
    pub n_blocks: usize,
    pub mu_max: f64,
    pub rho: f64,
    pub pnlms: bool,
    pub two_path: bool,
}

impl AecConfig {
    /// 150 ms filter in hop-sized blocks.
    pub fn for_rate(sample_rate: u32) -> Self {
        let block_len = sample_rate as usize / 100;
        Self {
            block_len,
            n_blocks: 15,
            mu_max: 0.5,
            rho: 0.01,
            pnlms: true,
            two_path: true,
        }
    }

    pub fn filter_len(&self) -> usize {
        self.block_len * self.n_blocks
    }
}

/// One processed frame: the echo-free output and the echo estimate.
#[derive(Debug, Clone)]
pub struct AecOutput<T> {
    pub output: Vec<T>,
    pub echo: Vec<T>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AecStats {
    pub frames: u64,
    pub adapted_frames: u64,
    pub promotions: u64,
    pub resets: u64,
}

pub struct EchoCanceller<T: Real> {
    config: AecConfig,
    filter: MdfFilter<T>,
    control: AdaptationControl<T>,
    two_path: TwoPath<T>,
    frozen: bool,
    stats: AecStats,
    mu: T,
}

impl<T: Real> EchoCanceller<T> {
    pub fn new(config: AecConfig) -> Result<Self> {
        if config.block_len == 0 || config.n_blocks == 0 {
            return Err(Error::Config("echo canceller needs a non-empty filter".into()));
        }
        if !(config.mu_max > 0.0 && config.mu_max <= 1.0) {
            return Err(Error::Config(format!("mu_max {} outside (0, 1]", config.mu_max)));
        }
        let filter = MdfFilter::new(config.block_len, config.n_blocks);
        let control = AdaptationControl::new(filter.n_bins(), T::lit(config.mu_max))
            .with_warmup(config.n_blocks as u64);
        Ok(Self {
            filter,
            control,
            two_path: TwoPath::default(),
            frozen: false,
            stats: AecStats::default(),
            mu: T::zero(),
            config,
        })
    }

    pub fn for_rate(sample_rate: u32) -> Result<Self> {
        Self::new(AecConfig::for_rate(sample_rate))
    }

    pub fn config(&self) -> &AecConfig {
        &self.config
    }

    pub fn stats(&self) -> AecStats {
        self.stats
    }

    /// Step size used on the most recent frame.
    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn control(&self) -> &AdaptationControl<T> {
        &self.control
    }

    pub fn filter(&self) -> &MdfFilter<T> {
        &self.filter
    }

    pub fn filter_mut(&mut self) -> &mut MdfFilter<T> {
        &mut self.filter
    }

    /// Stops all adaptation; the filter keeps running with its current
    /// weights.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    fn active_path(&self) -> Path {
        if self.config.two_path {
            Path::Foreground
        } else {
            Path::Background
        }
    }

    pub fn load_impulse_response(&mut self, h: &[T]) {
        self.filter.load_impulse_response(h);
    }

    /// Moves both filters `delta` taps earlier (later if negative), for a
    /// far end whose delay just grew by `delta` samples.
    pub fn shift_taps(&mut self, delta: isize) {
        for path in [Path::Foreground, Path::Background] {
            let h = self.filter.impulse_response(path);
            let n = h.len() as isize;
            let shifted: Vec<T> = (0..n)
                .map(|i| {
                    let j = i + delta;
                    if (0..n).contains(&j) { h[j as usize] } else { T::zero() }
                })
                .collect();
            self.filter.set_impulse_response(path, &shifted);
        }
    }

    /// Impulse response of the filter that produces the output.
    pub fn foreground_impulse_response(&mut self) -> Vec<T> {
        let path = self.active_path();
        self.filter.impulse_response(path)
    }

    /// Writes the output filter's impulse response as little-endian `f32`.
    pub fn dump_impulse_response<W: Write>(&mut self, mut w: W) -> Result<()> {
        for v in self.foreground_impulse_response() {
            w.write_all(&v.to_f32_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn process_frame(&mut self, mic: &[T], far: &[T]) -> Result<AecOutput<T>> {
        let b = self.config.block_len;
        for x in [mic, far] {
            if x.len() != b {
                return Err(Error::FrameLength { expected: b, found: x.len() });
            }
        }
        if !all_finite(mic) {
            return Err(Error::NonFinite("microphone"));
        }
        if !all_finite(far) {
            return Err(Error::NonFinite("far end"));
        }
        self.stats.frames += 1;
        self.filter.push_far(far);

        let active = self.active_path();
        let echo = self.filter.output(active);
        let output: Vec<T> = mic.iter().zip(&echo).map(|(&d, &z)| d - z).collect();

        let excited = energy(far) / T::from_len(b) > T::lit(1e-9);
        if self.frozen || !excited {
            self.mu = T::zero();
            return Ok(AecOutput { output, echo });
        }

        self.filter.update_far_power();
        let bg_echo = if self.config.two_path {
            self.filter.output(Path::Background)
        } else {
            echo.clone()
        };
        let bg_err: Vec<T> = mic.iter().zip(&bg_echo).map(|(&d, &z)| d - z).collect();

        let far_power = self.filter.span_power();
        let err_spec = self.filter.padded_spectrum(&bg_err);
        let err_power: Vec<T> = err_spec.iter().map(Complex::norm_sqr).collect();
        self.mu = self
            .control
            .learning_rate_update(&far_power, &err_power);

        let mut output = output;
        let mut echo = echo;
        if self.config.two_path {
            let decision =
                self.two_path
                    .update(energy(mic), energy(&output), energy(&bg_err));
            match decision {
                PathDecision::Promote => {
                    self.filter.promote();
                    self.stats.promotions += 1;
                    output = bg_err.clone();
                    echo = bg_echo;
                }
                PathDecision::ResetBackground => {
                    self.filter.reset_background();
                    self.stats.resets += 1;
                    return Ok(AecOutput { output, echo });
                }
                PathDecision::ClearBackground => {
                    self.filter.clear_background();
                    self.stats.resets += 1;
                    return Ok(AecOutput { output, echo });
                }
                PathDecision::Hold => {}
            }
        }

        if self.mu > T::zero() {
            let mult = if self.config.pnlms {
                self.filter.pnlms_block_scale(T::lit(self.config.rho))
            } else {
                vec![T::one(); self.config.n_blocks]
            };
            self.filter.adapt(&err_spec, self.mu, &mult);
            self.filter.constrain_blocks();
            self.stats.adapted_frames += 1;
        }
        Ok(AecOutput { output, echo })
    }
}
