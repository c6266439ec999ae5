//! Synthetic scenarios for the duplex engine: sources, room responses,
//! echo/noise mixing with exact level ratios, and training-set export.

pub mod dataset;
pub mod error;
pub mod render;
pub mod rir;
pub mod scenario;
pub mod source;
pub mod suites;
pub mod toy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use dataset::{export_dataset, DatasetFile, ExportOptions, Record};
pub use error::{Error, Result};
pub use render::{render, Rendered};
pub use rir::synth_rir;
pub use scenario::{parse_scenarios, Clip, Scenario};
pub use source::Source;

/// Independent random stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Derived seed for a sub-component.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
