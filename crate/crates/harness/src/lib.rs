//! Experiment harness for multi-domain active learning: configuration,
//! dataset files, grid runs, transfer matrices and reports.
//!
//! The algorithms live in `mdal_core`; this crate adds everything that
//! touches the file system, threads or the clock.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;
pub mod svg;
pub mod transfer;

pub use config::ExperimentConfig;
pub use error::HarnessError;
