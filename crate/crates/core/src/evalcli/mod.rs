//! Evaluation metrics, attention export, checkpoints and run configuration.

pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod gradcheck;
pub mod metrics;

pub use attention::AttentionTable;
pub use checkpoint::Checkpoint;
pub use config::{DataConfig, RunConfig};
pub use metrics::{edit_distance, letter_error_rate, ConfusionMatrix, EditOps};
