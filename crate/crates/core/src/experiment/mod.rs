//! Config-driven experiment runs and their on-disk artifacts.

pub mod config;
pub mod runner;

pub use config::{
    load_config, DatasetSpec, DiagnosticsSection, ExperimentConfig, FederationSection, IdxSpec, PartitionSection,
    RunMode, SyntheticSpec, DEFAULT_CLASS_SEP, RESOLVED_CONFIG_FILE,
};
pub use runner::{
    find_resolved_config, initial_model, inspect_checkpoint, mean_trace, partition_preview, prepare_data,
    run_algorithm, run_experiment, AlgorithmRun, CheckpointInfo, PreparedData, RunSummary,
};
