//! Experiment harness around the `sysintel` core: configuration files,
//! parallel policy runs, bound sweeps and CSV output.

pub mod app;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod sweep;

pub use config::{parse_config, ConfigError, ExperimentConfig, PolicyKind};
pub use experiment::{run_experiment, ExperimentResult, RunOptions};
pub use sweep::{sweep_bound, sweep_single_app, SingleAppMode};
