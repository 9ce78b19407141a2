//! Psychophysics-versus-network toolkit.
//!
//! Generates the classic psychophysical stimulus families (noise-perturbed
//! photographs, segmentation / crowding / shape line patterns, sine
//! gratings), runs them through layered feed-forward models loaded from the
//! NWF v1 weight format while capturing named layer taps, and computes three
//! perceptual correlates on the captured activations:
//!
//! * perturbation saliency: mean absolute activation change under additive
//!   noise, averaged per tap and then across taps;
//! * per-neuron mutual information between a stimulus category and a
//!   quantile-binned activation;
//! * contrast response: mean absolute change between a gray field and a
//!   grating, with iso-output inversion and log-linearity analysis.
//!
//! The [`stats`] module holds the evaluation statistics used to compare
//! those correlates with measured human data, and [`harness`] wires the
//! whole thing into reproducible experiments.

pub mod engine;
pub mod error;
pub mod fft;
pub mod filterbank;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod seed;
pub mod stats;
pub mod stimuli;

pub use error::{Error, Result};
pub use image::{ImagePlane, Rect};
