//! End-to-end IVOCT plaque-classification pipeline: synthetic B-scan
//! generation, polar/cartesian scan conversion, augmentation, CNN training
//! over a backbone registry, and sensitivity/specificity evaluation.

pub mod augment;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod phantom;
pub mod rng;

#[cfg(test)]
pub(crate) mod testkit;

pub use error::{Error, Result};

/// Entry point for the `ivoct` binary. Returns the process exit code.
pub fn run_cli() -> i32 {
    cli::run(std::env::args_os())
}
