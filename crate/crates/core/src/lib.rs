//! Sequential recommendation with per-sequence adaptive spectral filtering
//! and Haar wavelet detail enhancement.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: real FFT and level-1 Haar transforms with adjoints.
//! - [`diff`]: a small reverse-mode tape, parameter storage, Adam,
//!   finite-difference checking and checkpoints.
//! - [`model`]: the encoder and its prediction head.
//! - [`data`]: ingestion, 5-core filtering, leave-one-out splits, batching.
//! - [`metrics`], [`train`], [`analysis`]: ranking evaluation, the training
//!   loop, band-pass attribution, exports and scaling benchmarks.
//! - [`config`]: the run configuration file format.

pub mod analysis;
pub mod config;
pub mod data;
pub mod diff;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod real;
pub mod seed;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{Model, ModelConfig};
pub use real::Real;
pub use tensor::Matrix;
