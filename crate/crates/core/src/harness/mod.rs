//! Experiment plumbing behind the `positnn` command: configuration files and
//! presets, the training loop with CSV metrics, verification suites and the
//! value-distribution dump.

pub mod config;
pub mod distribution;
pub mod gradcheck;
pub mod oracle;
pub mod presets;
pub mod train;
pub mod verify;

pub use config::{DatasetName, ExperimentConfig, Model};
pub use distribution::Distribution;
pub use presets::{preset, PRESETS};
pub use train::{evaluate, metrics_csv, train, MetricsRow, RunOutcome, METRICS_HEADER};
pub use verify::{Report, Suite};
