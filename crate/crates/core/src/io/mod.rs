//! File formats: WAV audio, `.hdfw` weight bundles and run configs.

pub mod config;
pub mod hdfw;
pub mod wav;

pub use config::{load_run_config, PathsConfig, RunConfig};
pub use hdfw::{load_weights, read_bundle, read_bundle_file, save_weights, write_bundle, MAGIC};
pub use wav::{read_wav, write_wav};
