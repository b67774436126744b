//! Companion to `keyplan-core` for everything that needs an operating
//! system: wall clocks, file formats, run manifests, plots and the
//! experiment pipeline behind the `keyplan` binary.

pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod plot;

use std::time::Instant;

use keyplan_core::clock::Clock;

pub use error::{CliError, Result};

/// Monotonic wall clock measured from its creation.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
