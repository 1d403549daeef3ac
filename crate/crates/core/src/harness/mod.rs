//! Experiment configuration, multi-trial execution, percentile
//! aggregation and plot data.

pub mod aggregate;
pub mod config;
pub mod demand;
pub mod experiment;
pub mod output;
pub mod presets;

pub use aggregate::{log_times, percentile, AggregateCurve, Series};
pub use config::{ExperimentConfig, ExperimentKind, SystemSpec};
pub use experiment::{run_experiment, ExperimentOutput, TrialFailure, TrialRecord};
pub use output::{curve_from_csv, curve_to_csv, emit_plotdata, Manifest};
