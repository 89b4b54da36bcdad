//! Object saliency from a classification CNN.
//!
//! An image the network recognizes as class `l` is darkened by a few steps
//! of gradient descent that lower the class-`l` logit while clamping the
//! other logits to their starting values. The per-pixel drop is the raw
//! saliency map; it is then averaged within SLIC superpixels and weighted by
//! a low-level color-contrast cue.
//!
//! # Features
//!
//! - `parallel` *(default)*: runs batch, training, SLIC assignment and
//!   per-superpixel loops on rayon. Results are bit-identical to the
//!   sequential path; see [`Execution`].

pub mod color;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod image;
pub mod lowlevel;
pub mod nn;
pub mod pipeline;
pub mod saliency;
pub mod superpixel;
pub mod synth;
pub mod tensor;

pub use config::PipelineConfig;
pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
pub use image::{ImageRgb, Mask, SaliencyMap};
pub use nn::Network;
