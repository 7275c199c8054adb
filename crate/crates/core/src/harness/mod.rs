//! Configuration, experiment orchestration, metrics files and the
//! self-check report.
//!
//! Evaluation rollouts measure the policy and are not counted in
//! `trajectories_consumed`.

pub mod check;
pub mod config;
pub mod experiment;
pub mod plot;

pub use check::{check_suite, CheckOptions, CheckReport};
pub use config::{presets, Algorithm, EvaluationConfig, RunConfig};
pub use experiment::{run_experiment, sweep_minibatch, RunMetrics, SweepReport};
pub use plot::emit_plot_data;
