//! Latent-space analysis for pretrained generative models: attribute
//! labeling, per-class eigen-statistics, attribute editing transforms,
//! entanglement analytics and balanced-dataset planning.

pub mod cli;
pub mod entanglement;
pub mod error;
pub mod latent_io;
pub mod planner;
pub mod remote;
pub mod scoring;
pub mod stats;
pub mod transform;

pub use error::{Error, ErrorClass, Result};
