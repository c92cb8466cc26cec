//! Experiment runner: scenario configuration, seeded sweeps, baselines, and
//! CSV output.

mod config;
mod csv;
mod runner;
mod seed;

pub use config::{parse_config, Criterion, ErrorMode, ScenarioConfig};
pub use csv::{format_row, write_csv, CSV_HEADER};
pub use runner::{
    calibrate, evaluate, evaluate_point, point_setup, run_baselines, run_error_sweep, run_snr_sweep, run_trial,
    PointResult, PointSetup, RunOptions, Strategy, SweepRow, TrialOutcome,
};
pub use seed::{stream, Purpose};
