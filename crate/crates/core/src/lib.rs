//! Multi-symbol direction classification with a deep feed-forward network.

pub mod dataset;
pub mod error;
pub mod matrixkit;
pub mod network;
pub mod rng;
pub mod strategy;
pub mod trainer;
pub mod walkforward;

pub use error::{Error, Result};
pub use matrixkit::Matrix;
