//! Argument handling for the `enhance` and `simgen` binaries.

pub mod enhance;
pub mod simgen;

/// Logger honouring `RUST_LOG`, defaulting to warnings.
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
}
