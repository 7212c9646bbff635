//! Monte-Carlo harness around `dcsjced-core`: experiment configuration,
//! seeded trials, BER / NMSE metrics, CSV output and the text formats for
//! channel traces and parity-check matrices.

pub mod config;
pub mod experiment;
pub mod formats;
pub mod metrics;
pub mod streams;

pub use config::{ChannelSource, ExperimentConfig, Mode};
pub use experiment::{run_experiment, run_trial, Harness, Observation, ResultRow, TrialOutcome};
