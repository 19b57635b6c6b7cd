//! Musculoskeletal radiograph abnormality classification.
//!
//! - [`dataset`]: MURA-layout scanning, image loading, preprocessing, batching
//! - [`modelzoo`]: CNN backbones behind a single-logit classifier head, checkpoints
//! - [`training`]: loss, plateau learning-rate decay, the fine-tuning loop
//! - [`metrics`]: confusion-matrix metrics, study aggregation, comparison reports
//! - [`cam`]: class activation maps and heatmap overlays

pub mod cam;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod modelzoo;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
