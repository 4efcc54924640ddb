//! Weakly-supervised crack segmentation from image-level labels.
//!
//! A small classifier is trained to tell cracked patches from damage-free
//! ones; attribution methods then turn its decisions into per-pixel maps,
//! which are binarized, cleaned with morphology and measured.

pub mod attribution;
pub mod error;
pub mod explainer;
pub mod formats;
pub mod growth;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod postproc;
pub mod rng;
pub mod severity;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use mask::BinaryMask;
pub use tensor::Tensor;
