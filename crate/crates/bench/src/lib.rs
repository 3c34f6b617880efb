//! Experiment runner for merged indexes and their baselines.
//!
//! A grid point ([`ExperimentConfig`]) builds one structure, warms it and
//! measures one phase; [`MetricsReport`] holds the counters and space.

pub mod config;
pub mod error;
pub mod grid;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{BufferSize, ExperimentConfig, Phase};
pub use error::{BenchError, Result};
pub use grid::{run_grid, GridSpec, PhaseOps, DEFAULT_GRID_ROWS};
pub use report::{
    ratio_table, report_space, write_csv, write_json, MetricsReport, RatioRow, SpaceRow,
};
pub use runner::{build, run_experiment, run_experiment_on};
