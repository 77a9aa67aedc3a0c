//! Experiment orchestration: data, sweeps, metrics files and summaries.

pub mod config;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod summary;

pub use config::{ExperimentConfig, GridCell, ModelKind};
pub use data::{corrupt_labels, generate_synthetic, SyntheticSpec};
pub use experiment::{load_data, run_cell, run_experiment, run_experiment_with, run_grid};
pub use metrics::MetricsRow;
pub use summary::{summarize, summarize_rows, test_accuracy_spread, SummaryRow};
