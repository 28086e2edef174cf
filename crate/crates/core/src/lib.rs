//! Tap decoding for soft keyboards from capacitive touch heatmaps.
//!
//! The crate covers the full pipeline: keyboard geometry, feature
//! extraction from touch centroids and heatmap frames, trainable
//! logistic-regression spatial models plus two training-free baselines,
//! decoding with optional character-LM fusion, touch-to-key alignment of
//! typing logs, prompt selection, a seeded synthetic data generator, and
//! an evaluation harness (CER/WER/WPM, leave-one-out cross-validation,
//! paired significance statistics).

pub mod align;
pub mod decoder;
pub mod error;
pub mod features;
pub mod layout;
pub mod lm;
pub mod optim;
pub mod spatial;

pub use error::{Error, Result};
pub use layout::{KeyId, KeyboardLayout, Point};
