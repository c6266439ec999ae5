//! Streaming joint acoustic echo cancellation and speech enhancement.
//!
//! The engine removes linear echo with a multidelay block frequency-domain
//! adaptive filter, then suppresses residual echo, noise and late
//! reverberation with per-band gains and a pitch comb filter whose
//! strengths come from a quantized block-sparse recurrent network.
//!
//! Signal processing is generic over the sample type (`f32` or `f64`) via
//! [`Real`]; the network itself always runs on `f32` activations with
//! `int8` weights. The aliases at the crate root pick `f32`, which is what
//! the command-line tools use.

pub mod aec;
pub mod delay;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod pitch;
mod scalar;
pub mod wav;

pub use error::{Error, Result};
pub use scalar::Real;

/// Number of perceptual bands used throughout the enhancement path.
pub const NB_BANDS: usize = 32;
/// Frames of look-ahead used by the enhancement path.
pub const LOOKAHEAD_FRAMES: usize = 2;
/// Size of the network input vector.
pub const NB_FEATURES: usize = 3 * NB_BANDS + 4;

pub type Engine = pipeline::Engine<f32>;
pub type Engine64 = pipeline::Engine<f64>;
pub type EchoCanceller = aec::EchoCanceller<f32>;
pub type EchoCanceller64 = aec::EchoCanceller<f64>;
pub type DelayEstimator = delay::DelayEstimator<f32>;
pub type Analyzer = dsp::Analyzer<f32>;
pub type Synthesizer = dsp::Synthesizer<f32>;
pub type BandLayout = dsp::BandLayout<f32>;
pub type SpectralFrame = dsp::SpectralFrame<f32>;
pub type PitchTracker = pitch::PitchTracker<f32>;
pub type FeatureExtractor = features::FeatureExtractor<f32>;
