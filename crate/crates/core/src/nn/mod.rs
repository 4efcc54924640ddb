//! Minimal sequential neural-network engine.

pub mod kernels;
pub mod layer;
pub mod model_io;
pub mod network;
pub mod real;
pub mod train;

pub use layer::LayerSpec;
pub use model_io::{decode_model, encode_model, load_model, save_model};
pub use network::{
    mini_vgg, random_tensor, softmax, softmax_f64, ActivationTrace, Gradients, Model, Network, Params, PreciseNetwork,
};
pub use real::Real;
pub use train::{
    balanced_accuracy, predict, train_classifier, Adam, AdamParams, EpochStats, LabeledImage, TrainConfig, TrainHistory,
};
