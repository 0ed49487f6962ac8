//! Multiple-kernel sparse representations.
//!
//! Kernels built from precomputed distances are combined with nonnegative
//! weights, a multilevel dictionary is learned in the combined feature space,
//! and the weights are tuned with a graph embedding so that sparse codes of
//! same-class samples agree.

pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod khyperline;
pub mod kmld;
pub mod linalg;
pub mod pipeline;
pub mod sdp;
pub mod synth;

pub use error::{Error, Result};
