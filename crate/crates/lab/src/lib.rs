//! Experiment runner for `distill-lab-core`: JSON configuration, on-disk checkpoint
//! stores, pipeline stages with run manifests, and report aggregation.

pub mod config;
pub mod data;
pub mod emit;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod runlog;
pub mod store_io;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
