//! Monte Carlo estimation, diagnostics, configuration and result files.

mod config;
mod diagnose;
mod experiment;
mod kn;
mod stats;

pub use config::{resolve_seed, Caps, ExponentSection, FileConfig, SEED_ENV};
pub use diagnose::{concentration_check, kn_sweep, KnSweep};
pub use experiment::{
    cell_seed, estimate_error_rate, run_cell, run_experiment, skip_reason, CellReport, DecoderTrend,
    ExperimentPlan, ExperimentSummary, Predictions, SkippedCell, CSV_FILE, DIAGNOSTIC_SAMPLES, SUMMARY_FILE,
};
pub use kn::{kn_diagnostic, kn_from_weights, KnReport};
pub use stats::{exponent_regression, kendall_tau_b, wilson_interval, ErrorEstimate, Regression, CSV_HEADER, Z_95};
