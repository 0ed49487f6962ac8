//! File formats: matrices, labels, configuration, manifests and model
//! containers. Every decoder has a byte- or string-level entry point that
//! never panics on malformed input.

pub mod config;
pub mod dataset;
pub mod labels;
pub mod manifest;
pub mod matrix;
pub mod model;

pub use config::parse_config;
pub use dataset::write_dataset;
pub use labels::parse_labels;
pub use manifest::Manifest;
pub use matrix::{decode_matrix, read_matrix, write_matrix};
pub use model::{load_model, save_model};
