//! Experiment orchestration: JSON configuration, CSV records and the runners
//! behind the command-line subcommands.

pub mod config;
pub mod experiments;
pub mod records;

pub use config::{DiagnoseSpec, ExperimentConfig, RegimesSpec, TailsSpec, DEFAULT_SEED};
pub use experiments::{
    run_diagnose, run_regimes, run_replication, run_tails, Outcome, Replication,
};
pub use records::{
    read_csv, write_csv, AggregateRow, DiagnoseRow, Record, RegimeRow, ResultRow, TailRow,
};
