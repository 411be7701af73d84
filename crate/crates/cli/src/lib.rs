//! Experiment harness: strict JSON configs, content-addressed run
//! directories, a concurrent beta/seed sweep, and report CSVs that collect
//! trained runs and reference encoders into rate/distortion tables.

pub mod artifacts;
pub mod baseline_cmd;
pub mod cli;
pub mod config;
pub mod gradcheck;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod sweep;

pub use artifacts::{fmt6, MetricsRow, ProbeRow};
pub use baseline_cmd::{run_baseline, run_discard};
pub use cli::{parse_args, run_cli, Cli, Command, USAGE};
pub use config::{BaselineKind, BinarizeChoice, ConfigTree, DatasetConfig, NetKind};
pub use manifest::{run_id_for, RunManifest, RunStatus};
pub use report::emit_report;
pub use runner::{
    build_dataset, dataset_classes, encode_split, rerun_probe, run_experiment, DatasetPair,
    RunOptions, RunSummary,
};
pub use sweep::{run_sweep, SweepRow};

use rdprobe_core::Error;

/// Exit codes promised by the command-line contract.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;

/// An error routed to its contractual exit code. Configuration and usage
/// problems exit 1, unreadable or malformed datasets exit 2, diverged
/// training exits 3.
#[derive(Debug)]
pub struct CliFailure {
    pub exit: i32,
    pub error: Error,
}

impl CliFailure {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliFailure { exit: EXIT_USAGE, error: Error::InvalidArg(msg.into()) }
    }

    pub fn config(error: Error) -> Self {
        CliFailure { exit: EXIT_USAGE, error }
    }

    pub fn data(error: Error) -> Self {
        CliFailure { exit: EXIT_DATA, error }
    }
}

pub type CliResult<T> = std::result::Result<T, CliFailure>;
