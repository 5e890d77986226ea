//! Config-driven experiment runner for the DEM observer: synthetic and
//! logged data, the benchmark estimators, tidy CSV reports and a CLI.
//!
//! A run is described by an [`ExperimentConfig`] (JSON); [`run`] executes
//! it and writes every artifact under the config's output directory with a
//! `manifest.json` listing them.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;

pub use config::ExperimentConfig;
pub use error::{FieldError, HarnessError, Result};
pub use experiments::run;
pub use report::ExperimentReport;
