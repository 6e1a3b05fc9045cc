//! The two-stage enhancement network.

pub mod accounting;
pub mod blocks;
pub mod config;
pub mod net;
pub mod weights;

pub use accounting::{macs_per_frame, macs_per_second, param_count, MacBreakdown};
pub use config::{ModelConfig, StageLayout};
pub use net::{hdf_enhance, DfHeadOutput, Enhanced, HdfNet, Tacrn};
pub use weights::{layer_schema, LayerSpec, TensorRole, WeightBundle, WeightTensor, FORMAT_VERSION};
