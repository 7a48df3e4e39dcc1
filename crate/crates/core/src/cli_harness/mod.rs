//! Configuration, experiment drivers and CSV reporting behind the
//! `consensus-svm` binary.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{config_path, parse_config, Command, DataSource, ExperimentConfig, Method};
pub use experiments::{
    hyperplane_file, load_data, run_accuracy_sweep, run_accuracy_sweep_with, run_bias,
    run_convergence_trace, run_convergence_trace_with, run_stability, run_timing, run_timing_with,
    run_toyfig, Data, Hyperplane, TimingSummary,
};
pub use report::{format_real, Cell, ReportRow, RunReport, Table, REPORT_COLUMNS};
