//! Datasets, experiment configs and grid runs.

pub mod config;
pub mod data;
pub mod runner;

pub use config::{Cell, DatasetConfig, ExperimentConfig, GridConfig, InitKind, ModelConfig, SplitConfig};
pub use data::{load_iris, load_mnist, stratified_split, synthetic, Dataset, MinMaxScaler};
pub use runner::{aggregate_csv, prepare_data, run_cell, run_experiment, to_samples, MetricsRecord, PreparedData, RunOutput};
