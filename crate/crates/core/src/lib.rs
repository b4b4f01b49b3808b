//! Synthetic label hierarchies, a small dense network, distillation losses
//! and label-bit capacity bounds.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod info_bits;
pub mod losses;
pub mod rng;
pub mod tinynet;
pub mod train_eval;

pub use error::{Error, Result};
pub use hierarchy::{LabelHierarchy, LabelLevel, TaskPreset};
