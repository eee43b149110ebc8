//! Config files, replication runner and report files behind the `sadmm` binary.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{parse_config, validate_config, BoundKind, ExperimentConfig, ScheduleName, VariantName};
pub use experiment::{cached_reference, resolve_out_dir, run_experiment, Report, RunOptions, RunOutcome, OUT_DIR_ENV};
pub use output::{AGGREGATE_HEADER, TRAJECTORY_HEADER};
