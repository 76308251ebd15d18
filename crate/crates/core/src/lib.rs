//! Imbalanced multi-label text classification over precomputed token embeddings.
//!
//! The pieces compose into one pipeline:
//!
//! - [`loss`]: element-wise focal loss and its class-weighted batch form.
//! - [`weighting`]: dynamic per-class weights driven by running class losses,
//!   plus static baselines.
//! - [`model`]: bidirectional Elman/LSTM encoder with attention pooling and a
//!   sigmoid output layer, with hand-written backpropagation.
//! - [`thresholding`]: per-class decision thresholds maximizing macro-F1.
//! - [`trainer`]: mini-batch Adam with early stopping on validation macro-F1.
//! - [`io`]: MLSE embedding files, checkpoints and run configs.

pub mod cli;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod thresholding;
pub mod trainer;
pub mod types;
pub mod weighting;

pub use error::{Error, Result};
