//! Experiment runner tying the exact kernels, spectral machinery and
//! samplers together: declarative JSON configs in, verdict reports and
//! plot-ready CSV tables out.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, KINDS};
pub use experiments::run_experiment;
pub use report::{write_outputs, ExperimentOutput, ExperimentReport, Verdict};
