//! Experiment configuration, Monte Carlo drivers, statistics and reports.

pub mod config;
pub mod experiments;
pub mod report;
pub mod stats;

pub use config::ExperimentConfig;
pub use report::ExperimentReport;
