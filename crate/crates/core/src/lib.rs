//! Two-stage hierarchical deep filtering for single-channel speech
//! enhancement at 16 kHz.
//!
//! A first network predicts per-bin complex filters from a band-compressed
//! view of the noisy spectrogram; a second network refines the result with
//! filters over neighbouring bins. Both filter the noisy input and their
//! outputs are summed.

pub mod erb;
pub mod error;
pub mod filtering;
pub mod io;
pub mod loss;
pub mod model;
pub mod nn;
pub mod reference;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use filtering::{FilterCoeffs, FilterMode, FilterSpec};
pub use io::RunConfig;
pub use loss::LossConfig;
pub use model::{hdf_enhance, HdfNet, ModelConfig, WeightBundle};
pub use spectral::{ComplexSpectrogram, StftParams, Waveform, SAMPLE_RATE};
