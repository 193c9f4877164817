//! Experiment configuration, execution and output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ExperimentConfig, FitKind, InitialState, TargetConfig, TargetMethodConfig};
pub use output::{read_matrix_dump, write_json, write_matrix_dump, write_run, write_sweep};
pub use run::{
    aggregate_realizations, distances_to_targets, run_experiment, run_experiment_cached, run_scaling_sweep,
    run_scaling_sweep_cached, verify_replica, verify_theorem1, ReplicaReport, RunRecord, SweepRecord, TargetCache,
    Theorem1Stats,
};
