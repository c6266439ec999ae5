//! Seeded scenario families used by tests, the acceptance run and the toy fit.

use rand::Rng;

use crate::scenario::{Clip, Scenario};
use crate::source::Source;
use crate::stream_rng;

/// Far-end single talk: silent near end, echo plus background noise.
pub fn far_single_talk(seed: u64, sample_rate: u32) -> Scenario {
    let mut rng = stream_rng(seed, 0x5354);
    let mut s = Scenario::new(format!("fst_{seed}"), seed);
    s.sample_rate = sample_rate;
    s.duration_s = 5.0;
    s.near = Source::Silence;
    s.noise = if rng.gen_bool(0.5) { Source::White } else { Source::Pink };
    s.snr_db = Some(rng.gen_range(10.0..30.0));
    s.echo_ratio_db = Some(rng.gen_range(0.0..15.0));
    s.delay_ms = rng.gen_range(20.0..200.0f64).round();
    s.rt60_far = rng.gen_range(0.1..0.4);
    s.clip = Clip::None;
    s
}

/// Near-end speech with noise and no echo.
pub fn near_single_talk(seed: u64, sample_rate: u32) -> Scenario {
    let mut rng = stream_rng(seed, 0x4e53);
    let mut s = Scenario::new(format!("nst_{seed}"), seed);
    s.sample_rate = sample_rate;
    s.far = Source::Silence;
    s.echo_ratio_db = None;
    s.noise = if rng.gen_bool(0.5) { Source::White } else { Source::Pink };
    s.snr_db = Some(rng.gen_range(0.0..30.0));
    s.rt60_near = rng.gen_range(0.1..0.8);
    s.early_gain = rng.gen_range(0.5..1.5);
    s
}

/// Both talkers active.
pub fn double_talk(seed: u64, sample_rate: u32) -> Scenario {
    let mut rng = stream_rng(seed, 0x4454);
    let mut s = Scenario::new(format!("dt_{seed}"), seed);
    s.sample_rate = sample_rate;
    s.noise = if rng.gen_bool(0.5) { Source::White } else { Source::Pink };
    s.snr_db = Some(rng.gen_range(5.0..35.0));
    s.echo_ratio_db = Some(rng.gen_range(-10.0..15.0));
    s.delay_ms = rng.gen_range(20.0..200.0f64).round();
    s.rt60_near = rng.gen_range(0.1..0.8);
    s.rt60_far = rng.gen_range(0.1..0.4);
    s.early_gain = rng.gen_range(0.5..1.5);
    s
}

/// Mixed training list; seeds start at `first_seed`.
pub fn training_set(n: usize, first_seed: u64, sample_rate: u32) -> Vec<Scenario> {
    (0..n as u64)
        .map(|i| {
            let seed = first_seed + i;
            match i % 3 {
                0 => far_single_talk(seed, sample_rate),
                1 => near_single_talk(seed, sample_rate),
                _ => double_talk(seed, sample_rate),
            }
        })
        .collect()
}
