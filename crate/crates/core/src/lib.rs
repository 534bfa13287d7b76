pub mod datakit;
pub mod decode;
pub mod error;
pub mod evalcli;
pub mod features;
pub mod model;
pub mod numcore;
pub mod seq2seq;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{FeatureMode, Model, ModelConfig, Vocab};
