//! Configuration-driven experiment runner: seeded episodes per method,
//! one CSV record per episode, and a JSON sidecar with the resolved
//! config and aggregate statistics.

mod config;
mod record;
mod runner;
pub mod stats;

pub use config::{parse_seed_list, ConfigError, EnvSpec, EstimatorSettings, ExperimentConfig, Method};
pub use record::{write_csv, RunRecord, COLUMNS, SCHEMA_VERSION};
pub use runner::{
    ablate, center_for, per_node_scaling, run, run_experiment, runtime_profile, search_config_for,
    solve, sweep_noise, Comparison, ExperimentOutput, GroupSummary, HarnessError, RuntimePoint,
    RuntimeProfile, ScalingPoint, SCALING_BUDGETS,
};
