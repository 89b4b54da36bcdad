//! Minimal convolutional network: forward inference, backpropagation of an
//! arbitrary output-layer error down to the input pixels, training, and
//! checkpointing.

pub mod checkpoint;
mod layer;
mod network;
mod train;

pub use layer::{Conv2d, Dense, Layer};
pub use network::{ForwardPass, Logits, Network};
pub use train::{accuracy, cross_entropy, train, EpochStats, LabeledImage, TrainConfig, TrainReport};
